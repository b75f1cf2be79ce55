//! Builds the synthetic two-level hierarchy, writes it as CSV and reads it
//! back. Pass an output path as the first argument to keep the file.

use hae::data::{gen_hierarchy, read_dataset, write_dataset, HierSpec, Split};

fn main() -> hae::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hae_data.csv"));
    let spec = HierSpec::default();
    let ds = gen_hierarchy(&spec)?;
    write_dataset(&ds, &path)?;
    let back = read_dataset(&path)?;
    assert_eq!(back, ds);

    println!("{} rows of dimension {} in {}", ds.len(), ds.dim, path.display());
    println!("seen classes   {:?}", ds.classes(Split::Seen));
    println!("unseen classes {:?}", ds.classes(Split::Unseen));

    // classes under one superclass share a direction, so they sit closer
    let centroid = |class: usize| {
        let rows: Vec<_> = ds.samples.iter().filter(|s| s.class == class).collect();
        (0..ds.dim)
            .map(|d| rows.iter().map(|s| s.features[d]).sum::<f64>() / rows.len() as f64)
            .collect::<Vec<f64>>()
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (c0, c1, c4) = (centroid(0), centroid(1), centroid(spec.classes_per_super));
    println!("centroid distance, same superclass  {:.3}", dist(&c0, &c1));
    println!("centroid distance, other superclass {:.3}", dist(&c0, &c4));
    Ok(())
}
