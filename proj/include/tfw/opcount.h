#pragma once
// Multiply-accumulate counter. Layer forwards add to the calling thread's
// counter; the weave transform adds nothing, which is the property the
// op-count assertions verify. Counts are per-thread: measure on one thread.
#include <cstdint>

namespace tfw::macs {

inline thread_local uint64_t tls_count = 0;

inline void add(uint64_t n) { tls_count += n; }
inline void reset() { tls_count = 0; }
inline uint64_t get() { return tls_count; }

}  // namespace tfw::macs
