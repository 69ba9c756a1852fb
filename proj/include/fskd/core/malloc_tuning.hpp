#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fskd {

// Training allocates and frees the same multi-megabyte activation buffers
// every step. Keeping those inside the heap instead of per-call mmap regions
// lets pages be reused across steps.
inline void tune_malloc_for_training() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace fskd
