#include <string.h>

#include "mathx.h"
#include "ringbuf.h"

int rb_total_pushes = 0;

static int rb_scale_value(const struct rb_config *cfg, int value)
{
    return value * cfg->scale;
}

static void rb_note_push(void)
{
    rb_total_pushes++;
}

void rb_init(ring_buffer *rb, int scale)
{
    memset(rb, 0, sizeof(*rb));
    rb->config.scale = scale;
}

/* Append a scaled value; fails when the buffer is full. */
int rb_push(ring_buffer *rb, int value)
{
    if (rb->count == RB_CAPACITY)
        return -1;
    rb->items[rb->tail] = rb_scale_value(&rb->config, value);
    rb->tail = (rb->tail + 1) % RB_CAPACITY;
    rb->count++;
    rb_note_push();
    return 0;
}

int rb_pop(ring_buffer *rb, int *out)
{
    if (rb->count == 0)
        return -1;
    *out = rb->items[rb->head];
    rb->head = (rb->head + 1) % RB_CAPACITY;
    rb->count--;
    return 0;
}

int rb_max(const ring_buffer *rb)
{
    int best = rb->items[rb->head];
    int k;
    for (k = 1; k < rb->count; k++)
        best = MAX(best, rb->items[(rb->head + k) % RB_CAPACITY]);
    return best;
}

int rb_sum(const ring_buffer *rb)
{
    int s = 0;
    int k = 0;
    while (k < rb->count) {
        s += rb->items[(rb->head + k) % RB_CAPACITY];
        k++;
    }
    return s;
}

void rb_reset(ring_buffer *rb)
{
    rb->head = 0;
    rb->tail = 0;
    rb->count = 0;
}
