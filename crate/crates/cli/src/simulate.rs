use mvq::accel::{
    render_csv, render_text, simulate_settings, AccelConfig, EnergyModel,
    Setting, CSV_HEADER, RESNET18_TABLE,
};

use mvq::io::parse_layer_table;

use crate::fail::{Failure, Outcome};
use crate::files::{read_text, write_bytes};
use crate::SimulateArgs;

pub fn run(a: &SimulateArgs) -> Outcome {
    let text = match &a.table {
        Some(p) => read_text(p, false)?,
        None => RESNET18_TABLE.to_string(),
    };
    let layers = parse_layer_table(&text).map_err(|e| {
        let src = a.table.as_ref().map_or("bundled table".into(), |p| p.display().to_string());
        Failure::Data(format!("{src}: {e}"))
    })?;
    let (rows, cols) = a.array;
    let (ext_out, ext_in, ext_kernel) = a.ews;
    let base = AccelConfig {
        rows,
        cols,
        ext_out,
        ext_in,
        ext_kernel,
        pattern: a.nm,
        dma_bits: a.dma_bits,
        l1_bytes: a.l1_kb * 1024,
        weight_zero_fraction: a.weight_zeros,
        act_zero_fraction: a.act_zeros,
        ..AccelConfig::default()
    };
    let settings = if a.setting.is_empty() {
        Setting::ALL.to_vec()
    } else {
        a.setting.clone()
    };
    let reports = simulate_settings(&layers, &base, &settings, &EnergyModel::default())?;

    let mut text = String::new();
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &reports {
        text.push_str(&render_text(r));
        text.push('\n');
        csv.push_str(&render_csv(r));
    }
    if let [first, rest @ ..] = &reports[..] {
        text.push_str("data-access energy relative to the first setting:\n");
        for r in std::iter::once(first).chain(rest) {
            text.push_str(&format!(
                "  {:<8} {:>8.3}x reduction\n",
                r.label,
                first.energy.data_access() / r.energy.data_access()
            ));
        }
    }
    match &a.out {
        Some(prefix) => {
            let txt = prefix.with_extension("txt");
            let csv_path = prefix.with_extension("csv");
            write_bytes(&txt, text.as_bytes())?;
            write_bytes(&csv_path, csv.as_bytes())?;
            println!("wrote {} and {}", txt.display(), csv_path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
