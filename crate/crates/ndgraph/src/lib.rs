//! Static-graph reverse-mode differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is built once from named inputs, named parameters and a
//! fixed operator set, then evaluated any number of times with
//! [`Graph::forward`]. [`Graph::backward`] returns gradients of a scalar
//! node with respect to every trainable parameter.
//!
//! ```
//! use ndgraph::{Graph, Inputs, ParamStore, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param("x", &[]).unwrap();
//! let y = g.mul(x, x).unwrap();
//!
//! let mut params = ParamStore::new();
//! params.insert("x", Tensor::scalar(3.0));
//! let values = g.forward(&params, &Inputs::new()).unwrap();
//! assert_eq!(values.scalar(y), 9.0);
//! let grads = g.backward(&values, y).unwrap();
//! assert_eq!(grads.param("x").unwrap().item(), 6.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod conv;
mod error;
mod exec;
mod gradcheck;
mod graph;
mod params;
pub mod special;
mod tensor;

pub use error::{GraphError, Result};
pub use exec::{Gradients, Inputs, Values, EXP_CLAMP, LOG_FLOOR};
pub use gradcheck::{check_gradients, GradCheckOptions, GradientReport, FD_STEP, REL_FLOOR};
pub use graph::{Binary, Graph, NodeId, Reduce, Unary};
pub use params::{ParamStore, ARCHIVE_MAGIC};
pub use tensor::{broadcast_shapes, numel, Tensor};

/// Evaluates a graph that has no input leaves and no parameters.
pub fn eval_constant(graph: &Graph) -> Result<Values> {
    graph.forward(&ParamStore::new(), &Inputs::new())
}
