/* Fused forward/backward for the transformation classifier.
 *
 * Hidden layers are affine + LeakyReLU(0.2), parameters packed in `hp` with
 * per-layer weight offsets `w_off` (row-major out x in) and bias offsets
 * `b_off`. The head is stored transposed (hidden x classes) so the class
 * loops are unit stride. Gradients accumulate in row order; returns the
 * mean cross-entropy.
 */
#include <math.h>
#include <stdint.h>
#include <stdlib.h>
#include <string.h>

#include "_kernel_core.h"

/* One AVX2/FMA clone and a baseline clone, picked by the loader at runtime. */
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define STOC_CLONES __attribute__((target_clones("avx2,fma", "default")))
#else
#define STOC_CLONES
#endif

#define STOC_SLOPE 0.2
#define STOC_W 8

/* 8 -> 8 affine + LeakyReLU with compile-time trip counts. */
static inline void stoc_affine8(const double *restrict W, const double *restrict b,
                                const double *restrict src, double *restrict pre,
                                double *restrict act)
{
    for (int o = 0; o < STOC_W; ++o) {
        double a = b[o];
        for (int j = 0; j < STOC_W; ++j)
            a += W[o * STOC_W + j] * src[j];
        pre[o] = a;
        act[o] = a > 0 ? a : STOC_SLOPE * a;
    }
}

/* Backward through an 8 -> 8 layer; dh is overwritten with the input gradient. */
static inline void stoc_backward8(const double *restrict W, const double *restrict pre,
                                  const double *restrict src, double *restrict dh,
                                  double *restrict gW, double *restrict gb)
{
    double da[STOC_W], out[STOC_W] = {0};
    for (int o = 0; o < STOC_W; ++o) {
        da[o] = pre[o] > 0 ? dh[o] : STOC_SLOPE * dh[o];
        gb[o] += da[o];
        for (int j = 0; j < STOC_W; ++j) {
            gW[o * STOC_W + j] += da[o] * src[j];
            out[j] += da[o] * W[o * STOC_W + j];
        }
    }
    for (int j = 0; j < STOC_W; ++j)
        dh[j] = out[j];
}

STOC_CLONES
double stoc_fused_step(
    long L, const long *n_in, const long *n_out, const long *w_off, const long *b_off,
    const double *restrict hp, long H, long M,
    const double *restrict WhT, const double *restrict bh,
    long B, long R, const double *restrict Z, const int64_t *restrict labels,
    double *restrict ghp, double *restrict gWhT, double *restrict gbh, long width)
{
    double *act = malloc(sizeof(double) * L * width);
    double *pre = malloc(sizeof(double) * L * width);
    double *dh = malloc(sizeof(double) * width);
    double *da = malloc(sizeof(double) * width);
    double *g = malloc(sizeof(double) * M);
    const double inv_b = 1.0 / (double)B;
    double total = 0.0;

    for (long i = 0; i < B; ++i) {
        const double *z = Z + i * R;
        for (long l = 0; l < L; ++l) {
            const long fin = n_in[l], fout = n_out[l];
            const double *src = l == 0 ? z : act + (l - 1) * width;
            const double *W = hp + w_off[l];
            const double *b = hp + b_off[l];
            double *p = pre + l * width, *q = act + l * width;
            if (l > 0 && fin == STOC_W && fout == STOC_W)
                stoc_affine8(W, b, src, p, q);
            else
                for (long o = 0; o < fout; ++o) {
                    double a = b[o];
                    for (long j = 0; j < fin; ++j)
                        a += W[o * fin + j] * src[j];
                    p[o] = a;
                    q[o] = a > 0 ? a : STOC_SLOPE * a;
                }
        }
        const double *h = act + (L - 1) * width;

        double *restrict gg = g;
        memcpy(gg, bh, sizeof(double) * M);
        for (long k = 0; k < H; ++k) {
            const double hk = h[k];
            const double *restrict wrow = WhT + k * M;
            for (long m = 0; m < M; ++m)
                gg[m] += hk * wrow[m];
        }
        const long y = (long)labels[i];
        double mx = gg[0];
        for (long m = 1; m < M; ++m)
            mx = gg[m] > mx ? gg[m] : mx;
        total += mx - gg[y];
        double s = 0.0;
        for (long m = 0; m < M; ++m) {
            gg[m] = exp(gg[m] - mx);
            s += gg[m];
        }
        total += log(s);
        const double scale = inv_b / s;
        for (long m = 0; m < M; ++m) {
            gg[m] *= scale;
            gbh[m] += gg[m];
        }
        gg[y] -= inv_b;
        gbh[y] -= inv_b;

        for (long k = 0; k < H; ++k) {
            const double hk = h[k];
            const double *restrict wrow = WhT + k * M;
            double *restrict grow = gWhT + k * M;
            double acc = 0.0;
            for (long m = 0; m < M; ++m) {
                grow[m] += gg[m] * hk;
                acc += gg[m] * wrow[m];
            }
            dh[k] = acc;
        }

        for (long l = L - 1; l >= 0; --l) {
            const long fin = n_in[l], fout = n_out[l];
            const double *src = l == 0 ? z : act + (l - 1) * width;
            const double *W = hp + w_off[l];
            double *gW = ghp + w_off[l];
            double *gb = ghp + b_off[l];
            if (l > 0 && fin == STOC_W && fout == STOC_W) {
                stoc_backward8(W, pre + l * width, src, dh, gW, gb);
                continue;
            }
            for (long o = 0; o < fout; ++o) {
                const double d = pre[l * width + o] > 0 ? dh[o] : STOC_SLOPE * dh[o];
                da[o] = d;
                gb[o] += d;
                for (long j = 0; j < fin; ++j)
                    gW[o * fin + j] += d * src[j];
            }
            if (l > 0) {
                for (long j = 0; j < fin; ++j)
                    dh[j] = 0.0;
                for (long o = 0; o < fout; ++o)
                    for (long j = 0; j < fin; ++j)
                        dh[j] += da[o] * W[o * fin + j];
            }
        }
    }

    free(act);
    free(pre);
    free(dh);
    free(da);
    free(g);
    return total * inv_b;
}

