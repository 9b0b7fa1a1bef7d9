//! Counting global allocator for peak-memory measurements.
//!
//! The benchmark harness needs the peak heap footprint of a decomposition,
//! not of the whole process, so the allocator keeps a resettable high-water
//! mark. All LAPACK workspaces are allocated on the Rust side before the
//! foreign call, so the buffers that dominate a factorization are all seen
//! here. Overhead is two relaxed atomics per allocation — far below the
//! noise floor of the workloads being measured.
//!
//! The crate installs this as the `#[global_allocator]`, so every binary in
//! the workspace measures consistently.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

pub struct CountingAllocator;

impl CountingAllocator {
    #[inline]
    fn add(size: usize) {
        let cur = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
        PEAK.fetch_max(cur, Ordering::Relaxed);
    }

    #[inline]
    fn sub(size: usize) {
        CURRENT.fetch_sub(size, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            Self::add(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            Self::add(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        Self::sub(layout.size());
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            Self::sub(layout.size());
            Self::add(new_size);
        }
        p
    }
}

/// Bytes currently allocated.
pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

/// High-water mark since the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Restart the high-water mark from the current level. Standing allocations
/// (inputs shared by the code under measurement) stay included, which keeps
/// A-vs-B comparisons on the same baseline.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_tracks_a_large_allocation() {
        reset_peak();
        let before = peak_bytes();
        let buf = vec![0u8; 8 << 20];
        let during = peak_bytes();
        drop(buf);
        assert!(during >= before + (8 << 20));
        // Dropping must not lower the recorded peak.
        assert!(peak_bytes() >= during);
        reset_peak();
        assert!(peak_bytes() < during);
    }
}
