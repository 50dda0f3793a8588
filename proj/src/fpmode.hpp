#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define FLOODSR_HAVE_MXCSR 1
#endif

namespace floodsr::detail {

// Flushes subnormal floats to zero for the guard's lifetime. Subnormals
// appear in saturated logistic tails and cost ~100x per operation; they
// carry no useful signal at these magnitudes.
class FlushDenormals {
public:
    FlushDenormals() {
#ifdef FLOODSR_HAVE_MXCSR
        saved_ = _mm_getcsr();
        _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
    }
    ~FlushDenormals() {
#ifdef FLOODSR_HAVE_MXCSR
        _mm_setcsr(saved_);
#endif
    }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_ = 0;
};

}  // namespace floodsr::detail
