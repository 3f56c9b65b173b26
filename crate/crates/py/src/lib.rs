use pyo3::prelude::*;

#[pymodule]
fn mapeval(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
