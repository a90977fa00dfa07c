//! Python bindings for the dysonflow laboratory (filled in alongside the core).

use pyo3::prelude::*;

#[pymodule]
fn dysonflow_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
