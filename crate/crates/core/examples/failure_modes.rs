//! Runs the failure-mode protocol and prints the report as JSON.

use colorcascade::archetypes::{run_protocol, ProtocolConfig};

fn main() -> anyhow::Result<()> {
    let mut config = ProtocolConfig::default();
    if let Some(e) = std::env::args().nth(1) {
        config.train.epochs = e.parse()?;
    }
    if let Ok(seed) = std::env::var("SEED") {
        config.seed = seed.parse()?;
        config.train.seed = config.seed;
    }
    let start = std::time::Instant::now();
    let run = run_protocol(&config, |m, r| {
        eprintln!(
            "{m} epoch {:>2} train {:.4} val {:.4} acc {:.3}",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy
        )
    })?;
    let mut report = serde_json::to_value(&run.report)?;
    report.as_object_mut().unwrap().remove("c_history");
    report.as_object_mut().unwrap().remove("l_history");
    println!("{}", serde_json::to_string_pretty(&report)?);
    if std::env::var_os("SCORES").is_some() {
        use colorcascade::preprocess::{project, to_tensor, ChannelProjection};
        use colorcascade::synthcorpus::SceneClass;
        let pool = colorcascade::archetypes::eval_pool(config.seed, 40, config.size)?;
        for class in SceneClass::ALL {
            let mut sc: Vec<f64> = Vec::new();
            let mut sl: Vec<f64> = Vec::new();
            for img in pool.iter().filter(|i| i.recipe.class == class) {
                sc.push(run.model_c.network.forward(&to_tensor(&img.frame))?);
                let g = project(&img.frame, ChannelProjection::Grayscale)?;
                sl.push(run.model_l.network.forward(&to_tensor(&g))?);
            }
            sc.sort_by(f64::total_cmp);
            sl.sort_by(f64::total_cmp);
            let q = |v: &[f64]| {
                format!(
                    "{:.3} {:.3} {:.3} {:.3} {:.3}",
                    v[0],
                    v[v.len() / 4],
                    v[v.len() / 2],
                    v[3 * v.len() / 4],
                    v[v.len() - 1]
                )
            };
            eprintln!("{class:>22} C[{}] L[{}]", q(&sc), q(&sl));
        }
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
