//! Allocation instrumentation.
//!
//! [`CountingAlloc`] wraps the system allocator and counts bytes requested
//! on the calling thread. A binary opts in with
//!
//! ```ignore
//! #[global_allocator]
//! static ALLOC: kgcp_core::meter::CountingAlloc = kgcp_core::meter::CountingAlloc;
//! ```
//!
//! after which [`measure`] reports the bytes a closure requested. Without the
//! allocator installed, [`measure`] reports zero and [`is_active`] is false.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};

thread_local! {
    static REQUESTED: Cell<u64> = const { Cell::new(0) };
}

static ACTIVE: AtomicBool = AtomicBool::new(false);

pub struct CountingAlloc;

#[inline]
fn record(bytes: usize) {
    ACTIVE.store(true, Ordering::Relaxed);
    let _ = REQUESTED.try_with(|c| c.set(c.get() + bytes as u64));
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        record(layout.size());
        System.alloc(layout)
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        record(layout.size());
        System.alloc_zeroed(layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        record(new_size);
        System.realloc(ptr, layout, new_size)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }
}

/// True once [`CountingAlloc`] has served at least one request.
pub fn is_active() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

/// Bytes requested so far on this thread.
pub fn requested_bytes() -> u64 {
    REQUESTED.with(Cell::get)
}

/// Runs `f` and returns its result with the bytes it requested on this
/// thread (allocations made by other threads are not seen).
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let before = requested_bytes();
    let out = f();
    (out, requested_bytes() - before)
}
