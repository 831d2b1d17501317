#pragma once

namespace gtgrn::numcore {

/// Keeps large matrix buffers on the heap instead of fresh mmap pages. Training
/// allocates and frees many same-sized temporaries per step, and the default
/// glibc thresholds return them to the kernel each time. No-op elsewhere.
void tune_allocator();

}  // namespace gtgrn::numcore
