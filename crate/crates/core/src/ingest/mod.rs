//! Compiler sidecar artifacts: storage layouts, source maps and selectors.

pub mod layout;
pub mod selector;
pub mod srcmap;

pub use layout::{parse_storage_layout, resolve_slot, FieldKind, LayoutEntry, StorageLayout, UNKNOWN_FIELD};
pub use selector::{resolve_selector, signature_arg_types, ResolvedSelector, Selector};
pub use srcmap::{encode_source_map, parse_source_map, SourceMap, SrcEntry};
