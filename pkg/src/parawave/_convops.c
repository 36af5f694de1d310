/* Compiled inner loops for the 3x3 periodic convolutions.
 *
 * Layout is channels-last throughout: inputs are wrap-padded to
 * (B, H+2, W+2, C), kernels are (3, 3, C, Co), outputs (B, H, W, Co).
 * The output-channel loop is the vector axis; specializations with a
 * compile-time channel count let the compiler keep the accumulators in
 * registers. Loaded from Python through ctypes, so no CPython API here.
 */

#define DEFINE_CONV(CO)                                                      \
static void conv3_##CO(const double* restrict xp, const double* restrict wm, \
                       double* restrict out, long B, long H, long W, long C) \
{                                                                            \
    long Hp = H + 2, Wp = W + 2;                                             \
    for (long b = 0; b < B; b++) {                                           \
        for (long y = 0; y < H; y++) {                                       \
            for (long x = 0; x < W; x++) {                                   \
                double acc[CO];                                              \
                _Pragma("omp simd")                                          \
                for (long co = 0; co < CO; co++) acc[co] = 0.0;              \
                for (long ky = 0; ky < 3; ky++) {                            \
                    const double* row = xp + ((b*Hp + y+ky)*Wp + x)*C;       \
                    const double* wrow = wm + ky*3*C*CO;                     \
                    for (long kx = 0; kx < 3; kx++) {                        \
                        const double* px = row + kx*C;                       \
                        const double* w = wrow + kx*C*CO;                    \
                        for (long c = 0; c < C; c++) {                       \
                            double xv = px[c];                               \
                            _Pragma("omp simd")                              \
                            for (long co = 0; co < CO; co++)                 \
                                acc[co] += xv * w[c*CO + co];                \
                        }                                                    \
                    }                                                        \
                }                                                            \
                double* o = out + ((b*H + y)*W + x)*CO;                      \
                _Pragma("omp simd")                                          \
                for (long co = 0; co < CO; co++) o[co] = acc[co];            \
            }                                                                \
        }                                                                    \
    }                                                                        \
}

DEFINE_CONV(3)
DEFINE_CONV(4)
DEFINE_CONV(6)
DEFINE_CONV(8)
DEFINE_CONV(12)
DEFINE_CONV(16)
DEFINE_CONV(24)
DEFINE_CONV(32)
DEFINE_CONV(48)
DEFINE_CONV(64)
DEFINE_CONV(96)
DEFINE_CONV(128)

static void conv3_any(const double* restrict xp, const double* restrict wm,
                      double* restrict out, long B, long H, long W,
                      long C, long Co)
{
    long Hp = H + 2, Wp = W + 2;
    for (long b = 0; b < B; b++)
        for (long y = 0; y < H; y++)
            for (long x = 0; x < W; x++) {
                double* o = out + ((b*H + y)*W + x)*Co;
                _Pragma("omp simd")
                for (long co = 0; co < Co; co++) o[co] = 0.0;
                for (long ky = 0; ky < 3; ky++)
                    for (long kx = 0; kx < 3; kx++) {
                        const double* px = xp + ((b*Hp + y+ky)*Wp + x+kx)*C;
                        const double* w = wm + (ky*3 + kx)*C*Co;
                        for (long c = 0; c < C; c++) {
                            double xv = px[c];
                            _Pragma("omp simd")
                            for (long co = 0; co < Co; co++)
                                o[co] += xv * w[c*Co + co];
                        }
                    }
            }
}

void conv3(const double* xp, const double* wm, double* out,
           long B, long H, long W, long C, long Co)
{
    switch (Co) {
        case 3:   conv3_3  (xp, wm, out, B, H, W, C); break;
        case 4:   conv3_4  (xp, wm, out, B, H, W, C); break;
        case 6:   conv3_6  (xp, wm, out, B, H, W, C); break;
        case 8:   conv3_8  (xp, wm, out, B, H, W, C); break;
        case 12:  conv3_12 (xp, wm, out, B, H, W, C); break;
        case 16:  conv3_16 (xp, wm, out, B, H, W, C); break;
        case 24:  conv3_24 (xp, wm, out, B, H, W, C); break;
        case 32:  conv3_32 (xp, wm, out, B, H, W, C); break;
        case 48:  conv3_48 (xp, wm, out, B, H, W, C); break;
        case 64:  conv3_64 (xp, wm, out, B, H, W, C); break;
        case 96:  conv3_96 (xp, wm, out, B, H, W, C); break;
        case 128: conv3_128(xp, wm, out, B, H, W, C); break;
        default:  conv3_any(xp, wm, out, B, H, W, C, Co); break;
    }
}

/* Weight gradient: dw[ky][kx][c][co] += sum over pixels of
 * xp[b, y+ky, x+kx, c] * dl[b, y, x, co]. dw stays cache-resident. */
void conv3_dw(const double* restrict xp, const double* restrict dl,
              double* restrict dw, long B, long H, long W, long C, long Co)
{
    long Hp = H + 2, Wp = W + 2;
    for (long b = 0; b < B; b++)
        for (long y = 0; y < H; y++)
            for (long x = 0; x < W; x++) {
                const double* dvec = dl + ((b*H + y)*W + x)*Co;
                for (long ky = 0; ky < 3; ky++) {
                    const double* row = xp + ((b*Hp + y+ky)*Wp + x)*C;
                    double* dwrow = dw + ky*3*C*Co;
                    for (long kx = 0; kx < 3; kx++) {
                        const double* px = row + kx*C;
                        double* d = dwrow + kx*C*Co;
                        for (long c = 0; c < C; c++) {
                            double xv = px[c];
                            _Pragma("omp simd")
                            for (long co = 0; co < Co; co++)
                                d[c*Co + co] += xv * dvec[co];
                        }
                    }
                }
            }
}
