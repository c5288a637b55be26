use crate::nn::LayerSpec;

/// Conv64F: four blocks of 3×3 convolution (`d` filters, padding 1, no
/// bias), batchnorm and ReLU, with 2×2 max-pooling after the first two
/// blocks only. An `H×W` input yields an `(H/4)×(W/4)×d` feature map.
pub fn conv64f(in_channels: usize, d: usize) -> Vec<(String, LayerSpec)> {
    let mut layers = Vec::new();
    for block in 1..=4 {
        let cin = if block == 1 { in_channels } else { d };
        layers.push((
            format!("block{block}.conv"),
            LayerSpec::Conv2d {
                in_channels: cin,
                out_channels: d,
                kernel: 3,
                stride: 1,
                pad: 1,
                bias: false,
            },
        ));
        layers.push((format!("block{block}.bn"), LayerSpec::BatchNorm2d { channels: d }));
        layers.push((format!("block{block}.relu"), LayerSpec::Relu));
        if block <= 2 {
            layers.push((format!("block{block}.pool"), LayerSpec::MaxPool2d { kernel: 2, stride: 2 }));
        }
    }
    layers
}
