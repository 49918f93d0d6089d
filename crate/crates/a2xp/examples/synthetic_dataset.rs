//! Generates the procedural shapes corpus, styles it into four domains,
//! and writes a PNG preview per domain plus the dataset manifest.
//!
//! Run with:
//!
//! ```
//! cargo run --example synthetic_dataset
//! ```

use a2xp::data::{dataset_manifest, make_synthetic_domains, shapes_base_set, standard_styles};
use a2xp::tensor::Image;

fn to_png(img: &Image, path: &std::path::Path) {
    let s = img.shape();
    let mut buf = image::RgbImage::new(s.w as u32, s.h as u32);
    for y in 0..s.h {
        for x in 0..s.w {
            let px = [
                (img.get(0, y, x).clamp(0.0, 1.0) * 255.0) as u8,
                (img.get(1, y, x).clamp(0.0, 1.0) * 255.0) as u8,
                (img.get(2, y, x).clamp(0.0, 1.0) * 255.0) as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).expect("write png");
}

fn main() -> a2xp::Result<()> {
    let base = shapes_base_set(7, 8, 32, 0)?;
    let domains = make_synthetic_domains(&base, &standard_styles(), 7, 0.9, 1)?;

    let out = std::path::Path::new("target/synthetic_preview");
    std::fs::create_dir_all(out).expect("mkdir");
    for domain in &domains {
        // A strip of the first 7 samples, one per row of the strip.
        let s = domain.image_shape();
        let n = 7.min(domain.len());
        let mut strip = image::RgbImage::new((s.w * n) as u32, s.h as u32);
        for (i, (img, _)) in domain.samples().iter().take(n).enumerate() {
            for y in 0..s.h {
                for x in 0..s.w {
                    let px = [
                        (img.get(0, y, x).clamp(0.0, 1.0) * 255.0) as u8,
                        (img.get(1, y, x).clamp(0.0, 1.0) * 255.0) as u8,
                        (img.get(2, y, x).clamp(0.0, 1.0) * 255.0) as u8,
                    ];
                    strip.put_pixel((i * s.w + x) as u32, y as u32, image::Rgb(px));
                }
            }
        }
        let path = out.join(format!("{}.png", domain.name()));
        strip.save(&path).expect("write strip");
        println!("wrote {}", path.display());
        to_png(
            &domain.samples()[0].0,
            &out.join(format!("{}_sample0.png", domain.name())),
        );
    }

    let manifest = dataset_manifest(&domains);
    println!(
        "{}",
        serde_json::to_string_pretty(&manifest).expect("manifest json")
    );
    Ok(())
}
