//! Generate a biased synthetic dataset, print per-group label rates, and
//! write it as CSV with its manifest.
//!
//! ```text
//! cargo run --example synthetic_data -- [delta] [out.csv]
//! ```

use feast::data::{make_synthetic, sidecar_path, SynthSpec};

fn main() -> feast::Result<()> {
    let mut args = std::env::args().skip(1);
    let delta: f64 = args.next().map_or(2.0, |s| s.parse().expect("delta"));
    let out = args.next();

    let data = make_synthetic(&SynthSpec { delta, ..SynthSpec::default() })?;
    let t = &data.table;
    println!(
        "{} rows, {} features, {} subsets",
        t.n_samples(),
        t.n_features(),
        t.n_subsets()
    );
    for a in 0..2u8 {
        let rows: Vec<usize> = (0..t.n_samples()).filter(|&i| t.sensitive()[i] == a).collect();
        let pos = rows.iter().filter(|&&i| t.labels()[i] == 1).count();
        println!("a={a}: {} rows, P(y=1) = {:.3}", rows.len(), pos as f64 / rows.len() as f64);
    }
    for (s, p) in data.manifest.subset_p_sensitive.iter().enumerate() {
        println!("subset {:>8}: {} rows, P(a=1) = {p:.3}", t.subset_names()[s], t.subset_rows(s).len());
    }
    if let Some(path) = out {
        let path = std::path::Path::new(&path);
        data.write(path)?;
        println!("wrote {} and {}", path.display(), sidecar_path(path).display());
    }
    Ok(())
}
