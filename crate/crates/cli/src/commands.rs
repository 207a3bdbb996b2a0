use std::fs;

use mvq::clustering::ClusterMode;
use mvq::codec::{
    container_reports, decompress, deserialize, serialize, CompressedLayer, CompressionReport,
    DEFAULT_FULL_PRECISION_BITS,
};
use mvq::io::{parse_layer_config, LayerConfig};
use mvq::pipeline::{
    compress_layer, compress_shared, reencode_layer, run_ablation, AblationSettings,
    LayerOutcome, LayerSettings,
};
use mvq::quantization::ScaleMode;
use mvq::tensor::{group_weights, sse, WeightTensor};
use rand::{Rng, SeedableRng};

use crate::fail::{Failure, Outcome};
use crate::files::{read_container, read_tensor, read_text, write_bytes, write_tensor, NamedTensor};
use crate::{AblateArgs, CompressArgs, Mode, ReconstructArgs, Scope, StatsArgs};

fn shape_str(s: [usize; 4]) -> String {
    s.map(|v| v.to_string()).join("x")
}

fn print_header() {
    println!(
        "{:<24} {:>14} {:>4} {:>5} {:>5} {:>5} {:>13} {:>13} {:>8} {:>10} {:>10}",
        "layer", "shape", "d", "k", "N:M", "iters", "mask SSE", "mask SSE q", "CR", "MACs", "sparse"
    );
}

fn print_row(name: &str, layer: &CompressedLayer, report: &CompressionReport, o: Option<&LayerOutcome>) {
    let (iters, fp, q) = match o {
        Some(o) => (
            o.stats.iterations.to_string(),
            format!("{:.4}", o.sse_full_precision.mask_sse),
            format!("{:.4}", o.sse_quantized.mask_sse),
        ),
        None => ("-".into(), "-".into(), "-".into()),
    };
    println!(
        "{:<24} {:>14} {:>4} {:>5} {:>5} {:>5} {:>13} {:>13} {:>8.3} {:>10} {:>10}",
        name,
        shape_str(layer.shape()),
        layer.d(),
        layer.k(),
        layer.pattern().to_string(),
        iters,
        fp,
        q,
        report.ratio,
        report.dense_flops,
        report.sparse_flops
    );
}

pub fn compress(a: &CompressArgs) -> Outcome {
    let config = match &a.layers {
        Some(p) => parse_layer_config(&read_text(p, true)?)
            .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => LayerConfig::default(),
    };
    let base = LayerSettings {
        qc: a.qc,
        mode: match a.mode {
            Mode::Masked => ClusterMode::Masked,
            Mode::Common => ClusterMode::Common,
        },
        scale_mode: if a.grid_scale {
            ScaleMode::GridSearch
        } else {
            ScaleMode::AbsMax
        },
        seed: a.seed,
        ..LayerSettings::new(a.d, a.k, a.nm)
    };
    let tensors = a
        .inputs
        .iter()
        .map(|p| read_tensor(p))
        .collect::<Outcome<Vec<_>>>()?;

    let mut plan: Vec<(&NamedTensor, LayerSettings)> = Vec::new();
    for t in &tensors {
        match config.resolve(&t.name, &base) {
            Some(s) => plan.push((t, s)),
            None => println!("skipping {} (excluded)", t.name),
        }
    }

    let mut layers = Vec::with_capacity(plan.len());
    let mut reports = Vec::with_capacity(plan.len());
    print_header();
    if let Some(path) = &a.reuse_codebooks {
        let source = read_container(path)?;
        if source.len() != plan.len() {
            return Err(Failure::Config(format!(
                "{} has {} layers, {} to encode",
                path.display(),
                source.len(),
                plan.len()
            )));
        }
        for ((t, _), src) in plan.iter().zip(&source) {
            let layer = reencode_layer(&t.tensor, src.d(), src.pattern(), src.codebook())
                .map_err(|e| Failure::from(e).context(&t.name))?;
            layers.push(layer);
        }
        reports = container_reports(&layers, DEFAULT_FULL_PRECISION_BITS);
        for ((t, _), (layer, report)) in plan.iter().zip(layers.iter().zip(&reports)) {
            print_row(&t.name, layer, report, None);
        }
    } else {
        let outcomes = match a.scope {
            Scope::Layerwise => plan
                .iter()
                .map(|(t, s)| compress_layer(&t.tensor, s).map_err(|e| Failure::from(e).context(&t.name)))
                .collect::<Outcome<Vec<_>>>()?,
            Scope::Crosslayer => {
                let Some((_, first)) = plan.first() else {
                    return Err(Failure::Config("no layers to compress".into()));
                };
                if plan.iter().any(|(_, s)| s != first) {
                    return Err(Failure::Config(
                        "crosslayer scope needs the same d, k, N:M and qc for every layer".into(),
                    ));
                }
                let ws: Vec<WeightTensor> = plan.iter().map(|(t, _)| t.tensor.clone()).collect();
                compress_shared(&ws, first)?
            }
        };
        for ((t, _), o) in plan.iter().zip(outcomes) {
            print_row(&t.name, &o.layer, &o.report, Some(&o));
            reports.push(o.report);
            layers.push(o.layer);
        }
    }

    let bytes = serialize(&layers);
    match deserialize(&bytes) {
        Ok(back) if back == layers => {}
        Ok(_) => return Err(Failure::Internal("container does not decode to its layers".into())),
        Err(e) => return Err(Failure::Internal(format!("container does not decode: {e}"))),
    }
    write_bytes(&a.out, &bytes)?;
    let total = CompressionReport::aggregate(&reports);
    println!(
        "total: {} layers, payload {} bits (assignments {}, masks {}, codebooks {}), CR {:.3}, MACs/position {} -> {}",
        layers.len(),
        total.payload_bits(),
        total.b_a,
        total.b_m,
        total.b_c,
        total.ratio,
        total.dense_flops,
        total.sparse_flops
    );
    println!("wrote {} ({} bytes)", a.out.display(), bytes.len());
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Outcome {
    let w = match &a.input {
        Some(p) => read_tensor(p)?.tensor,
        None => {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
            let data = (0..4096 * 16).map(|_| r.sample(rand_distr::StandardNormal)).collect();
            WeightTensor::new([16, 256, 4, 4], data)?
        }
    };
    let s = AblationSettings {
        pattern: a.nm,
        common_k: a.k_common,
        common_d: a.d_common,
        masked_k: a.k,
        masked_d: a.d,
        seed: a.seed,
        ..AblationSettings::default()
    };
    let cases = run_ablation(&w, &s)?;
    println!(
        "{:<5} {:>4} {:>5} {:>14} {:>14} {:>6}",
        "case", "d", "k", "total SSE", "mask SSE", "FLOPs"
    );
    for c in &cases {
        println!(
            "{:<5} {:>4} {:>5} {:>14.4} {:>14.4} {:>6.3}",
            c.label, c.d, c.k, c.total_sse, c.mask_sse, c.flops_ratio
        );
    }
    Ok(())
}

pub fn stats(a: &StatsArgs) -> Outcome {
    let layers = read_container(&a.container)?;
    let refs = a
        .reference
        .iter()
        .map(|p| read_tensor(p))
        .collect::<Outcome<Vec<_>>>()?;
    if !refs.is_empty() && refs.len() != layers.len() {
        return Err(Failure::Config(format!(
            "{} reference tensors for {} layers",
            refs.len(),
            layers.len()
        )));
    }
    println!(
        "{:<6} {:>14} {:>4} {:>5} {:>5} {:>3} {:>12} {:>12} {:>8} {:>9}{}",
        "layer",
        "shape",
        "d",
        "k",
        "N:M",
        "qc",
        "scale",
        "payload",
        "CR",
        "sparsity",
        if refs.is_empty() { "" } else { "     total SSE      mask SSE" }
    );
    let reports = container_reports(&layers, DEFAULT_FULL_PRECISION_BITS);
    for (i, (l, report)) in layers.iter().zip(&reports).enumerate() {
        let recon = decompress(l)?;
        let mut line = format!(
            "{:<6} {:>14} {:>4} {:>5} {:>5} {:>3} {:>12.6e} {:>12} {:>8.3} {:>9.4}",
            i,
            shape_str(l.shape()),
            l.d(),
            l.k(),
            l.pattern().to_string(),
            l.codebook().bits(),
            l.codebook().scale(),
            report.payload_bits(),
            report.ratio,
            recon.zero_fraction()
        );
        if let Some(r) = refs.get(i) {
            if r.tensor.shape() != l.shape() {
                return Err(Failure::Data(format!(
                    "reference {} has shape {:?}, layer {i} has {:?}",
                    r.name,
                    r.tensor.shape(),
                    l.shape()
                )));
            }
            let e = sse(
                &group_weights(&r.tensor, l.d())?,
                &group_weights(&recon, l.d())?,
                Some(&l.mask()),
            )?;
            line.push_str(&format!(" {:>13.4} {:>13.4}", e.total_sse, e.mask_sse));
        }
        println!("{line}");
    }
    let total = CompressionReport::aggregate(&reports);
    println!(
        "total: {} layers, payload {} bits, CR {:.3}",
        layers.len(),
        total.payload_bits(),
        total.ratio
    );
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> Outcome {
    let layers = read_container(&a.container)?;
    fs::create_dir_all(&a.out)
        .map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    for (i, l) in layers.iter().enumerate() {
        let stem = format!("layer_{i:03}");
        let path = write_tensor(&a.out, &stem, &stem, &decompress(l)?)?;
        println!("{}", path.display());
    }
    Ok(())
}
