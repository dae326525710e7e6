//! The floor partition shared by bag building and frame-score expansion.
//!
//! `items` elements are split into `groups` contiguous segments whose
//! sizes differ by at most one. Bag construction averages clip rows per
//! segment and score expansion assigns frames to instances through the
//! same map, so segment boundaries agree on both sides by construction.

/// Half-open item range `[lo, hi)` covered by `group`.
pub fn bounds(group: usize, items: usize, groups: usize) -> (usize, usize) {
    debug_assert!(group < groups);
    (group * items / groups, (group + 1) * items / groups)
}

/// Group that `item` belongs to: the exact inverse of [`bounds`],
/// `⌈(item+1)·groups/items⌉ - 1`.
pub fn group_of(item: usize, items: usize, groups: usize) -> usize {
    debug_assert!(item < items);
    ((item + 1) * groups + items - 1) / items - 1
}
