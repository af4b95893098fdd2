#include "mathx.h"

/* Sum of two integers. */
int add(int a, int b)
{
    return a + b;
}

int square(int x)
{
    return x * x;
}

/* Bound v to the closed range [lo, hi]. */
int clamp(int v, int lo, int hi)
{
    if (v < lo)
        return lo;
    if (v > hi)
        return hi;
    return v;
}

int sum_of_squares(int n)
{
    int total = 0;
    int i;
    for (i = 1; i <= n; i++) {
        total += square(i);
    }
    return total;
}

int clamp_add(int a, int b)
{
    int raw = add(a, b);
    return clamp(raw, -LIMIT, LIMIT);
}

const char *sign_label(int v)
{
    return v < 0 ? "negative" : (v == 0 ? "zero" : "positive");
}

int in_range(int v, int lo, int hi)
{
    if (!(v < lo || v > hi))
        return 1;
    return 0;
}

int day_kind(int day)
{
    int kind;
    if (day == DAY_SAT)
        kind = WEEKEND;
    else if (day == DAY_SUN)
        kind = WEEKEND;
    else if (day == 0)
        kind = INVALID_DAY;
    else
        kind = WEEKDAY;
    return kind;
}

unsigned long factorial(unsigned int n)
{
    if (n <= 1)
        return 1;
    return n * factorial(n - 1);
}

int apply_op(int (*op)(int, int), int a, int b)
{
    return op(a, b);
}

static int double_it(int x)
{
    return x + x;
}

int double_next(int *counter)
{
    int doubled = double_it((*counter)++);
    return doubled;
}
