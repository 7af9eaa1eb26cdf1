//! Dense tensors with tape-based reverse-mode automatic differentiation.
//!
//! Tensors are immutable values. Operations on tensors that descend from a
//! [`Tape`] leaf are recorded; [`Tape::grad`] replays them backwards. A
//! backward pass can itself be recorded (`create_graph = true`), which is
//! what gradient penalties need.
//!
//! ```
//! use voxstyle_tensor::{Array, Tape};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.leaf(Array::from_f64(&[2], &[3.0, 4.0]).unwrap());
//! let norm = x.l2_norm(&[0]).unwrap();
//! let g = tape.grad(&norm, &[&x], false).unwrap();
//! assert_eq!(norm.item(), 5.0);
//! assert!((g[0].data()[0] - 0.6).abs() < 1e-12);
//! ```

pub mod array;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod scalar;
pub mod tape;

pub use array::Array;
pub use error::{Result, TensorError};
pub use scalar::{DType, Scalar};
pub use tape::{Backward, Tape, Tensor};
