//! Conversions between the ndarray containers used for data and the candle
//! tensors used by the trainable model.

use candle_core::{DType, Device, Tensor};
use ndarray::{Array, Array2, Array4, Dimension, IxDyn};

use crate::{Error, Result};

pub fn device() -> Device {
    Device::Cpu
}

pub fn to_tensor<D: Dimension>(array: &Array<f64, D>) -> Result<Tensor> {
    let shape = array.shape().to_vec();
    let data: Vec<f64> = array.iter().copied().collect();
    Ok(Tensor::from_vec(data, shape, &device())?)
}

pub fn to_array_dyn(tensor: &Tensor) -> Result<Array<f64, IxDyn>> {
    let shape = tensor.dims().to_vec();
    let data = tensor.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Array::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::Alignment(e.to_string()))
}

pub fn to_array4(tensor: &Tensor) -> Result<Array4<f64>> {
    to_array_dyn(tensor)?
        .into_dimensionality()
        .map_err(|e| Error::Alignment(e.to_string()))
}

pub fn to_array2(tensor: &Tensor) -> Result<Array2<f64>> {
    to_array_dyn(tensor)?
        .into_dimensionality()
        .map_err(|e| Error::Alignment(e.to_string()))
}

pub fn scalar(tensor: &Tensor) -> Result<f64> {
    Ok(tensor.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
