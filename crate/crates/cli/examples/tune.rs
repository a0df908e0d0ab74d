// dev probe: selection outcome + accuracy across seeds and criteria
use ncdnet_core::classify::{accuracy, centroid_predict, centroid_train};
use ncdnet_core::compress::Compressor;
use ncdnet_core::convnet::FeatureMap;
use ncdnet_core::dataset::{synthetic_textures, SyntheticConfig};
use ncdnet_core::ncd::distance_matrix_vectors;
use ncdnet_core::network::Network;
use ncdnet_core::select::select_indices;
use std::path::Path;

const NET: &str = "\
input h=32 w=32 ch=1
conv filters=1 size=3 stride=1 padding=1 activation=sigmoid B=1.0 seed=11
maxpool size=2 stride=2
conv filters=1 size=3 stride=1 padding=1 activation=sigmoid B=1.0 seed=12
maxpool size=2 stride=2
conv filters=1 size=3 stride=1 padding=0 activation=sigmoid B=1.0 seed=13
";

fn feats_of(net: &Network, items: &[(ncdnet_core::image::GrayImage, usize)]) -> Vec<(Vec<f64>, usize)> {
    items.iter().map(|(img, l)| {
        let input = FeatureMap::single(img.h(), img.w(), 1, img.to_unit_values()).unwrap();
        let (outs, _) = net.forward(input, false).unwrap();
        (outs[2].values().to_vec(), *l)
    }).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let carrier: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(70.0);
    let jitter: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let class_amp: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(26.0);
    let plain_noise: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let accent_noise: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(55.0);
    let net = Network::parse(NET, Path::new(".")).unwrap();
    let comp = Compressor::default();
    println!("carrier={carrier} class={class_amp} pnoise={plain_noise} anoise={accent_noise}");
    for seed in 1..=5u64 {
        let cfg = SyntheticConfig {
            seed, size: 32,
            carrier_amplitude: carrier, class_amplitude: class_amp,
            plain_noise, accent_noise, phase_jitter: jitter,
            ..SyntheticConfig::default()
        };
        let (train, test) = synthetic_textures(&cfg);
        let train_f = feats_of(&net, &train.items);
        let test_f = feats_of(&net, &test.items);
        let cols: Vec<Vec<f64>> = train_f.iter().map(|(v, _)| v.clone()).collect();
        let m = distance_matrix_vectors(&cols, &comp).unwrap();
        let test_truth: Vec<usize> = test_f.iter().map(|(_, l)| *l).collect();
        let acc_of = |set: &[(Vec<f64>, usize)]| -> f64 {
            match centroid_train(set, 5) {
                Ok(model) => {
                    let preds: Vec<usize> = test_f.iter().map(|(v, _)| centroid_predict(&model, v)).collect();
                    accuracy(&preds, &test_truth)
                }
                Err(_) => -1.0,
            }
        };
        let full_acc = acc_of(&train_f);
        print!("seed {seed}: full_acc={full_acc:.3} |");
        for tau in [0.70, 0.71, 0.72, 0.73, 0.74] {
            let (kept, _used, fb) = select_indices(&m, tau);
            let sel: Vec<(Vec<f64>, usize)> = kept.iter().map(|&i| train_f[i].clone()).collect();
            let classes_present = (0..5).filter(|c| sel.iter().any(|(_, l)| l == c)).count();
            let sel_acc = acc_of(&sel);
            print!(" t{tau}: k={}/{} cls={classes_present} acc={sel_acc:.2}{}|", kept.len(), cols.len(), if fb {" FB"} else {""});
        }
        println!();
    }
}
