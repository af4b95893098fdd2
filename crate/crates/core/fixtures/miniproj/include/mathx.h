#ifndef MATHX_H
#define MATHX_H

#define LIMIT 100
#define MAX(a, b) ((a) > (b) ? (a) : (b))

#define WEEKDAY 1
#define WEEKEND 2
#define INVALID_DAY (-1)

enum day_of_week {
    DAY_MON = 1,
    DAY_TUE,
    DAY_WED,
    DAY_THU,
    DAY_FRI,
    DAY_SAT,
    DAY_SUN
};

int add(int a, int b);
int square(int x);
int clamp(int v, int lo, int hi);
int sum_of_squares(int n);
int clamp_add(int a, int b);
const char *sign_label(int v);
int in_range(int v, int lo, int hi);
int day_kind(int day);
unsigned long factorial(unsigned int n);
int apply_op(int (*op)(int, int), int a, int b);
int double_next(int *counter);

#endif
