use std::time::Instant;

use camforge::cam::Method;
use camforge::cnn::{export_capture, generate_shapes, train, TrainConfig};
use camforge::seg::{delta_sweep, evaluate, EvalImage};

fn main() -> camforge::Result<()> {
    let all = generate_shapes(800, 7);
    let (train_set, test_set) = all.split_at(600);
    let t = Instant::now();
    let report = train(train_set, &TrainConfig::default())?;
    eprintln!("trained in {:.1?}: acc {:.3} losses {:?}", t.elapsed(), report.train_accuracy, report.epoch_losses);
    let dataset: Vec<EvalImage> = test_set
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let id = format!("test{i:03}");
            Ok(EvalImage {
                captures: vec![export_capture(&report.params, &s.image, s.label, &id)?],
                image_id: id,
                gt: s.gt_mask.clone(),
            })
        })
        .collect::<camforge::Result<_>>()?;
    let all_layers: Vec<String> = ["s1", "s2", "s3"].iter().map(|s| s.to_string()).collect();
    for (m, layers) in [
        (Method::GradCam, vec!["s3".to_string()]),
        (Method::GradCam, vec!["s2".to_string()]),
        (Method::GradCam, vec!["s1".to_string()]),
        (Method::GradCam, all_layers.clone()),
        (Method::LtGradCam, all_layers.clone()),
        (Method::LayerCam, all_layers.clone()),
        (Method::FullGrad, all_layers.clone()),
    ] {
        let r = evaluate(&dataset, m, &layers, 0.0, 3)?;
        println!("{m} {layers:?} {r:?}");
    }
    let deltas: Vec<f64> = (0..10).map(|i| i as f64 * 10.0).collect();
    print!("{}", delta_sweep(&dataset, Method::LtGradCam, &all_layers, &deltas, 3)?.to_csv());
    Ok(())
}
