//! Writes a few scenes of every class as PPM files for visual inspection.

use colorcascade::io::write_pnm;
use colorcascade::preprocess::{project, ChannelProjection};
use colorcascade::synthcorpus::{gen_image, SceneClass, SceneRecipe};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "scenes".into());
    std::fs::create_dir_all(&dir)?;
    for class in SceneClass::ALL {
        for seed in 0..4 {
            let frame = gen_image(&SceneRecipe::new(class, seed, 64))?;
            write_pnm(format!("{dir}/{class}_{seed}.ppm").as_ref(), &frame)?;
            let gray = project(&frame, ChannelProjection::Grayscale)?;
            write_pnm(format!("{dir}/{class}_{seed}_gray.pgm").as_ref(), &gray)?;
        }
    }
    Ok(())
}
