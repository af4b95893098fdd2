#ifndef RINGBUF_H
#define RINGBUF_H

#define RB_CAPACITY 8

struct rb_config {
    int scale;
};

typedef struct ring_buffer {
    int items[RB_CAPACITY];
    int head;
    int tail;
    int count;
    struct rb_config config;
} ring_buffer;

extern int rb_total_pushes;

void rb_init(ring_buffer *rb, int scale);
int rb_push(ring_buffer *rb, int value);
int rb_pop(ring_buffer *rb, int *out);
int rb_max(const ring_buffer *rb);
int rb_sum(const ring_buffer *rb);
void rb_reset(ring_buffer *rb);

#endif
