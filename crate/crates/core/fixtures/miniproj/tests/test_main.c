#include <stdio.h>
#include <string.h>

#include "mathx.h"
#include "ringbuf.h"

static int failures = 0;

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            printf("FAIL %s:%d: %s\n", __FILE__, __LINE__, #cond);      \
            failures++;                                                 \
        }                                                               \
    } while (0)

static int multiply(int lhs, int rhs)
{
    return lhs * rhs;
}

static void test_math(void)
{
    int counter = 3;

    CHECK(add(2, 3) == 5);
    CHECK(add(-4, 4) == 0);
    CHECK(square(-6) == 36);
    CHECK(clamp(5, 0, 3) == 3);
    CHECK(clamp(-5, 0, 3) == 0);
    CHECK(clamp(2, 0, 3) == 2);
    CHECK(sum_of_squares(0) == 0);
    CHECK(sum_of_squares(4) == 30);
    CHECK(clamp_add(60, 70) == 100);
    CHECK(clamp_add(-80, -90) == -100);
    CHECK(clamp_add(1, 2) == 3);
    CHECK(strcmp(sign_label(-2), "negative") == 0);
    CHECK(strcmp(sign_label(0), "zero") == 0);
    CHECK(strcmp(sign_label(9), "positive") == 0);
    CHECK(in_range(5, 1, 10) == 1);
    CHECK(in_range(0, 1, 10) == 0);
    CHECK(in_range(11, 1, 10) == 0);
    CHECK(day_kind(DAY_MON) == WEEKDAY);
    CHECK(day_kind(DAY_SAT) == WEEKEND);
    CHECK(day_kind(DAY_SUN) == WEEKEND);
    CHECK(day_kind(0) == INVALID_DAY);
    CHECK(factorial(0) == 1);
    CHECK(factorial(5) == 120);
    CHECK(apply_op(multiply, 6, 7) == 42);
    CHECK(double_next(&counter) == 6);
    CHECK(counter == 4);
}

static void test_ring(void)
{
    ring_buffer buf;
    int popped = 0;
    int i;

    rb_init(&buf, 2);
    for (i = 1; i <= 3; i++)
        CHECK(rb_push(&buf, i) == 0);
    CHECK(rb_total_pushes == 3);
    CHECK(rb_sum(&buf) == 12);
    CHECK(rb_max(&buf) == 6);
    CHECK(rb_pop(&buf, &popped) == 0);
    CHECK(popped == 2);
    CHECK(rb_sum(&buf) == 10);
    for (i = 0; i < RB_CAPACITY; i++)
        rb_push(&buf, 1);
    CHECK(rb_push(&buf, 1) == -1);
    rb_reset(&buf);
    CHECK(rb_pop(&buf, &popped) == -1);
}

int main(void)
{
    test_math();
    test_ring();
    printf("%d failures\n", failures);
    return failures != 0;
}
