#ifndef STOC_KERNEL_CORE_H
#define STOC_KERNEL_CORE_H

#include <stdint.h>

double stoc_fused_step(
    long L, const long *n_in, const long *n_out, const long *w_off, const long *b_off,
    const double *hp, long H, long M, const double *WhT, const double *bh,
    long B, long R, const double *Z, const int64_t *labels,
    double *ghp, double *gWhT, double *gbh, long width);

#endif
