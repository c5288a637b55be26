//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use radar_fewshot::fewshot::{ChannelDn4, EmbeddedFeature, EpisodeTensors, InputSpec, MetricKind, ModelConfig, SeBlock};
use radar_fewshot::nn::gradcheck::{central_difference, GradSample};
use radar_fewshot::nn::{Layer, LayerSpec, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-4;
/// Magnitude below which a derivative counts as zero for relative error.
pub const FD_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// O(n²) forward DFT.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

pub fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Indices of at most `count` coordinates out of `len`, always including
/// the first and last.
fn sample_coords(len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut out = vec![0, len - 1];
    while out.len() < count {
        out.push(rng.random_range(0..len));
    }
    out
}

/// Worst relative error between analytic and central-difference gradients
/// of `L = Σ w ⊙ layer(x)` over the input and every parameter.
pub fn layer_gradcheck(spec: &LayerSpec, input_shape: &[usize], seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut layer = Layer::<f64>::new(spec, &mut r).unwrap();
    for (_, p) in layer.params_mut() {
        for v in p.data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    let n: usize = input_shape.iter().product();
    let x = Tensor::from_vec(input_shape, random_vec(n, -1.0, 1.0, &mut r)).unwrap();
    let (y, saved) = layer.forward(&x, Mode::Train).unwrap();
    let w = Tensor::from_vec(y.shape(), random_vec(y.len(), -1.0, 1.0, &mut r)).unwrap();
    for (_, p) in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&saved, &w).unwrap();

    let loss = |layer: &mut Layer<f64>, x: &Tensor<f64>| -> f64 {
        let (y, _) = layer.forward(x, Mode::Train).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let mut samples = Vec::new();
    let mut xp = x.clone();
    for i in sample_coords(n, 40, &mut r) {
        let base = xp.data()[i];
        let mut coord = base;
        let numeric = central_difference(&mut coord, FD_EPS, |v| {
            xp.data_mut()[i] = v;
            loss(&mut layer, &xp)
        });
        xp.data_mut()[i] = base;
        samples.push(GradSample {
            analytic: dx.data()[i],
            numeric,
        });
    }
    let grads: Vec<Vec<f64>> = layer.params().iter().map(|(_, p)| p.grad().unwrap().to_vec()).collect();
    for (pi, g) in grads.iter().enumerate() {
        for i in sample_coords(g.len(), 40, &mut r) {
            let base = layer.params()[pi].1.data()[i];
            let mut coord = base;
            let numeric = central_difference(&mut coord, FD_EPS, |v| {
                layer.params_mut()[pi].1.data_mut()[i] = v;
                loss(&mut layer, &x)
            });
            layer.params_mut()[pi].1.data_mut()[i] = base;
            samples.push(GradSample {
                analytic: g[i],
                numeric,
            });
        }
    }
    radar_fewshot::nn::gradcheck::max_rel_error(&samples, FD_FLOOR)
}

/// Every layer kind with a representative input shape.
pub fn layer_cases() -> Vec<(LayerSpec, Vec<usize>)> {
    vec![
        (
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
                bias: false,
            },
            vec![2, 2, 5, 5],
        ),
        (
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                pad: 1,
                bias: true,
            },
            vec![2, 2, 5, 4],
        ),
        (LayerSpec::BatchNorm2d { channels: 3 }, vec![4, 3, 3, 2]),
        (LayerSpec::Relu, vec![2, 3, 4]),
        (LayerSpec::MaxPool2d { kernel: 2, stride: 2 }, vec![2, 2, 4, 6]),
        (
            LayerSpec::FullyConnected {
                in_features: 5,
                out_features: 4,
                bias: true,
            },
            vec![3, 5],
        ),
        (LayerSpec::Sigmoid, vec![7]),
    ]
}

fn feature(h: usize, w: usize, d: usize, r: &mut ChaCha8Rng) -> EmbeddedFeature<f64> {
    EmbeddedFeature::new(h, w, d, random_vec(h * w * d, 0.0, 1.0, r)).unwrap()
}

/// Squeeze → excite → recalibrate, `L = Σ w ⊙ F̂` over a batch of two maps.
pub fn se_gradcheck(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut se = SeBlock::<f64>::new(8, 2, &mut r).unwrap();
    let feats: Vec<_> = (0..2).map(|_| feature(3, 2, 8, &mut r)).collect();
    let w: Vec<Vec<f64>> = feats.iter().map(|f| random_vec(f.data.len(), -1.0, 1.0, &mut r)).collect();
    let loss = |se: &SeBlock<f64>, feats: &[EmbeddedFeature<f64>]| -> f64 {
        let (out, _) = se.forward(feats).unwrap();
        out.iter()
            .zip(&w)
            .map(|(f, w)| f.data.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    se.w1.weight.zero_grad();
    se.w2.weight.zero_grad();
    let (_, tape) = se.forward(&feats).unwrap();
    let dfeat = se.backward(&feats, &tape, &w).unwrap();
    let mut samples = Vec::new();
    let mut fp = feats.clone();
    for b in 0..2 {
        for i in 0..fp[b].data.len() {
            let base = fp[b].data[i];
            let mut coord = base;
            let numeric = central_difference(&mut coord, FD_EPS, |v| {
                fp[b].data[i] = v;
                loss(&se, &fp)
            });
            fp[b].data[i] = base;
            samples.push(GradSample {
                analytic: dfeat[b][i],
                numeric,
            });
        }
    }
    for which in 0..2 {
        let analytic = if which == 0 { se.w1.weight.grad() } else { se.w2.weight.grad() }.unwrap().to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let base = weight(&mut se, which).data()[i];
            let mut coord = base;
            let numeric = central_difference(&mut coord, FD_EPS, |v| {
                weight(&mut se, which).data_mut()[i] = v;
                loss(&se, &feats)
            });
            weight(&mut se, which).data_mut()[i] = base;
            samples.push(GradSample { analytic: a, numeric });
        }
    }
    radar_fewshot::nn::gradcheck::max_rel_error(&samples, FD_FLOOR)
}

fn weight(se: &mut SeBlock<f64>, which: usize) -> &mut Tensor<f64> {
    if which == 0 {
        &mut se.w1.weight
    } else {
        &mut se.w2.weight
    }
}

pub fn micro_config(metric: MetricKind) -> ModelConfig {
    ModelConfig {
        input: InputSpec {
            height: 8,
            width: 8,
            channels: 3,
            crop: None,
        },
        d: 8,
        reduction: 4,
        k: 2,
        se_enabled: true,
        metric,
        batch_size: 64,
        ..ModelConfig::default()
    }
}

/// Random 2-way 1-shot episode of 8×8 images with two queries per class.
pub fn micro_episode(seed: u64) -> EpisodeTensors<f64> {
    let mut r = rng(seed);
    let b = 2 + 4;
    EpisodeTensors {
        n_way: 2,
        images: Tensor::from_vec(&[b, 3, 8, 8], random_vec(b * 192, 0.0, 1.0, &mut r)).unwrap(),
        support_labels: vec![0, 1],
        query_labels: vec![0, 1, 1, 0],
    }
}

/// Full episode loss (embedding, SE, metric, cross-entropy) against
/// central differences for sampled coordinates of every parameter.
pub fn model_gradcheck(metric: MetricKind, seed: u64) -> f64 {
    let mut model = ChannelDn4::<f64>::new(micro_config(metric), seed).unwrap();
    let ep = micro_episode(seed + 1);
    model.train_episode(&ep).unwrap();
    let analytic: Vec<Vec<f64>> = model.named_params().iter().map(|(_, p)| p.grad().unwrap().to_vec()).collect();
    let mut r = rng(seed + 2);
    let mut samples = Vec::new();
    for (pi, g) in analytic.iter().enumerate() {
        for i in sample_coords(g.len(), 12, &mut r) {
            let base = model.named_params()[pi].1.data()[i];
            let mut coord = base;
            let numeric = central_difference(&mut coord, FD_EPS, |v| {
                model.named_params_mut()[pi].1.data_mut()[i] = v;
                model.episode_loss(&ep).unwrap()
            });
            model.named_params_mut()[pi].1.data_mut()[i] = base;
            samples.push(GradSample {
                analytic: g[i],
                numeric,
            });
        }
    }
    radar_fewshot::nn::gradcheck::max_rel_error(&samples, FD_FLOOR)
}

/// Exhaustive image-to-class score: every similarity computed directly,
/// neighbours chosen by a full sort on (similarity desc, index asc).
pub fn brute_class_score(query: &[Vec<f64>], pool: &[Vec<f64>], k: usize) -> (f64, Vec<Vec<usize>>) {
    let cos = |a: &[f64], b: &[f64]| {
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            ab / (na * nb)
        }
    };
    let mut total = 0.0;
    let mut sets = Vec::new();
    for q in query {
        let mut all: Vec<(f64, usize)> = pool.iter().enumerate().map(|(j, p)| (cos(q, p), j)).collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        total += all[..k].iter().map(|x| x.0).sum::<f64>();
        sets.push(all[..k].iter().map(|x| x.1).collect());
    }
    (total, sets)
}

/// Worst relative error of `range_fft` and `doppler_fft` against the naive
/// DFT over `signals` (at most 256) random 256-point signals of each kind.
pub fn fft_oracle(signals: usize, seed: u64) -> f64 {
    use radar_fewshot::radar::{doppler_fft, range_fft, ChirpConfig, ComplexMatrix, RawFrame, Window};
    let mut r = rng(seed);
    let n = 256;
    let random = |rows: usize, r: &mut ChaCha8Rng| {
        let v = random_vec(2 * rows * n, -1.0, 1.0, r);
        ComplexMatrix::from_vec(rows, n, v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap()
    };
    let rel = |got: &[Complex64], want: &[Complex64]| {
        let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
        (num / den).sqrt()
    };
    let mut worst = 0f64;

    let config = ChirpConfig {
        chirps_per_frame: signals,
        ..ChirpConfig::default()
    };
    let frame = RawFrame::new(random(signals, &mut r), config).unwrap();
    let spectrum = range_fft(&frame).unwrap();
    for c in 0..signals {
        worst = worst.max(rel(spectrum.row(c), &naive_dft(frame.samples.row(c))));
    }

    // Slow-time signals run down the columns; the output is shifted so that
    // bin k lands in row (k + n/2) mod n.
    let profile = random(n, &mut r);
    let spectrum = doppler_fft(&profile, Window::Rectangular).unwrap();
    for c in 0..signals.min(n) {
        let column: Vec<Complex64> = (0..n).map(|t| profile.get(t, c)).collect();
        let got: Vec<Complex64> = (0..n).map(|k| spectrum.get((k + n / 2) % n, c)).collect();
        worst = worst.max(rel(&got, &naive_dft(&column)));
    }
    worst
}

/// Peak of a single synthesized scatterer against the bins predicted by
/// the beat frequency `2 μ R / c` and the Doppler shift `2 v / λ`.
/// Returns `(range_bin, doppler_bin, predicted_range_bin,
/// predicted_doppler_bin)` per trial, predictions unrounded.
pub fn physics_oracle(trials: usize, seed: u64) -> Vec<(usize, usize, f64, f64)> {
    use radar_fewshot::radar::{rd_magnitude, ChirpConfig};
    use radar_fewshot::synth::{synth_frame, BodyScatterer, MotionClass, MotionModel, Path};
    const C: f64 = 299_792_458.0;
    let cfg = ChirpConfig::default();
    let slope = cfg.bandwidth / cfg.chirp_duration;
    let lambda = C / (cfg.carrier_start + cfg.bandwidth / 2.0);
    let n_fast = cfg.samples_per_chirp as f64;
    let n_slow = cfg.chirps_per_frame as f64;
    let frame_time = n_slow * cfg.chirp_duration;
    let mut r = rng(seed);
    (0..trials)
        .map(|_| {
            let range = r.random_range(0.5..12.0);
            let speed = r.random_range(-4.0..4.0);
            let radar_x = 20.0;
            let mut m = MotionModel::new(MotionClass::Stand, 0.0, 1.0, radar_x).unwrap();
            m.radar_height = 0.0;
            // Constant radial velocity via a very slow oscillation; the
            // range passes through `range` at mid-frame.
            let period = 1.0e6;
            let start = range - speed * frame_time / 2.0;
            m.scatterers = vec![BodyScatterer {
                name: "point",
                amplitude: 1.0,
                path: Path::Oscillate {
                    center: [radar_x - start, 0.0, 0.0],
                    dir: [-1.0, 0.0, 0.0],
                    amplitude: speed * period / (2.0 * PI),
                    period,
                    phase: 0.0,
                },
            }];
            let frame = synth_frame(&m, &cfg, 0.0, None, 0).unwrap();
            let (rb, db) = rd_magnitude(&frame).unwrap().argmax();
            let beat = 2.0 * slope * range / C;
            let doppler = 2.0 * speed / lambda;
            let want_r = beat / (cfg.sample_rate / n_fast);
            let want_d = n_slow / 2.0 + doppler * n_slow * cfg.chirp_duration;
            (rb, db, want_r, want_d)
        })
        .collect()
}

/// Worst score error and number of neighbour-set mismatches of
/// `class_score` against the exhaustive reference over random instances
/// with `m ≤ 16`, pools of at most 32 descriptors and `k ≤ 5`. A quarter of
/// the instances duplicate pool descriptors to exercise ties.
pub fn metric_oracle(instances: usize, seed: u64) -> (f64, usize) {
    use radar_fewshot::fewshot::{class_score, ClassSupportPool};
    let mut r = rng(seed);
    let mut worst = 0f64;
    let mut mismatches = 0;
    for i in 0..instances {
        let d = r.random_range(2..=12);
        let (h, w) = (r.random_range(1..=4), r.random_range(1..=4));
        let k = r.random_range(1..=5);
        let n = r.random_range(k..=32);
        let mut pool: Vec<Vec<f64>> = (0..n).map(|_| random_vec(d, -1.0, 1.0, &mut r)).collect();
        if i % 4 == 0 && n > 1 {
            for j in (1..n).step_by(3) {
                pool[j] = pool[j - 1].clone();
            }
        }
        let query: Vec<Vec<f64>> = (0..h * w).map(|_| random_vec(d, -1.0, 1.0, &mut r)).collect();
        let feat = EmbeddedFeature::new(h, w, d, query.concat()).unwrap();
        let pool_t = ClassSupportPool::from_descriptors(d, pool.concat()).unwrap();
        let got = class_score(&feat, &pool_t, k).unwrap();
        let (score, sets) = brute_class_score(&query, &pool, k);
        worst = worst.max((got.score - score).abs());
        for (p, want) in sets.iter().enumerate() {
            let mut a = got.neighbors_of(p).to_vec();
            let mut b = want.clone();
            a.sort_unstable();
            b.sort_unstable();
            mismatches += usize::from(a != b);
        }
    }
    (worst, mismatches)
}

/// Episodes on which channel-DN4 with unit attention and a plain DN4
/// sharing its embedding disagree bitwise, out of `episodes`.
pub fn ablation_mismatches(episodes: usize, seed: u64) -> usize {
    let cfg = ModelConfig {
        d: 16,
        reduction: 4,
        k: 3,
        ..micro_config(MetricKind::Knn)
    };
    let mut with_se = ChannelDn4::<f32>::new(cfg.clone(), seed).unwrap();
    with_se.force_unit_attention = true;
    let mut plain = ChannelDn4::<f32>::new(
        ModelConfig {
            se_enabled: false,
            ..cfg
        },
        seed + 1,
    )
    .unwrap();
    plain.load_checkpoint(&with_se.to_checkpoint()).unwrap();
    assert_eq!(with_se.method_name(), "dn4");
    let mut r = rng(seed + 2);
    let mut bad = 0;
    for _ in 0..episodes {
        let n_way = r.random_range(2..=5);
        let shots = r.random_range(1..=3);
        let queries = r.random_range(1..=6);
        let b = n_way * (shots + queries);
        let images: Vec<f32> = random_vec(b * 192, 0.0, 1.0, &mut r).into_iter().map(|v| v as f32).collect();
        let ep = EpisodeTensors {
            n_way,
            images: Tensor::from_vec(&[b, 3, 8, 8], images).unwrap(),
            support_labels: (0..n_way).flat_map(|c| std::iter::repeat_n(c, shots)).collect(),
            query_labels: (0..n_way).flat_map(|c| std::iter::repeat_n(c, queries)).collect(),
        };
        let a = with_se.evaluate_episode(&ep).unwrap();
        let b = plain.evaluate_episode(&ep).unwrap();
        let same = a.predictions.len() == b.predictions.len()
            && a.predictions.iter().zip(&b.predictions).all(|(x, y)| {
                x.prediction == y.prediction
                    && x.scores.iter().zip(&y.scores).all(|(s, t)| s.to_bits() == t.to_bits())
            });
        bad += usize::from(!same);
    }
    bad
}

/// Linearly separable toy maps: class `c` lights one 4×4 block of a 16×16
/// map, on top of uniform clutter. Frames alternate between 0° and 90°.
pub fn toy_set(classes: usize, per_class: usize, seed: u64) -> radar_fewshot::episode::LabeledSet {
    use radar_fewshot::radar::{MapMeta, RangeDopplerMap, RealMatrix};
    let mut r = rng(seed);
    let mut maps = Vec::new();
    for c in 0..classes {
        for i in 0..per_class {
            let mut v = random_vec(256, 0.0, 0.3, &mut r);
            let (br, bc) = (4 * (c / 4), 4 * (c % 4));
            for row in br..br + 4 {
                for col in bc..bc + 4 {
                    v[row * 16 + col] = r.random_range(0.7..1.0);
                }
            }
            maps.push(RangeDopplerMap {
                values: RealMatrix::from_vec(16, 16, v).unwrap(),
                meta: MapMeta {
                    class_label: format!("c{c}"),
                    aspect_deg: if i % 2 == 0 { 0.0 } else { 90.0 },
                    subject_id: 0,
                    distance_m: 1.2,
                    frame_index: i as u64,
                },
            });
        }
    }
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    radar_fewshot::episode::LabeledSet::from_maps(names, &micro_config(MetricKind::Knn).input, &maps).unwrap()
}

/// Reduced input used for the full-dataset runs: the central 64 range bins
/// by 128 Doppler bins, resized to 32×32.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        input: InputSpec {
            height: 32,
            width: 32,
            channels: 3,
            crop: Some(radar_fewshot::fewshot::CropSpec {
                range_bins: 64,
                doppler_bins: 128,
            }),
        },
        ..ModelConfig::default()
    }
}

/// 9-way 5-shot episodic training, 100 epochs of 10 episodes.
pub fn desk_train() -> radar_fewshot::episode::TrainConfig {
    radar_fewshot::episode::TrainConfig {
        episodes_per_epoch: 10,
        ..Default::default()
    }
}
