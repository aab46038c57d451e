#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use plantnet_core::data::synthetic;

pub fn texture_labels() -> String {
    synthetic::TEXTURES.join(",")
}

/// Synthetic three-texture tree of `per_class` images per class.
pub fn texture_tree(root: &Path, per_class: usize, size: usize, seed: u64) {
    synthetic::write_tree(root, per_class, size, seed).unwrap();
}

pub fn args(words: &[&str]) -> Vec<String> {
    std::iter::once("plantnet").chain(words.iter().copied()).map(String::from).collect()
}

/// Run the built binary, so exit codes and stderr are observed for real.
pub fn plantnet(words: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plantnet")).args(words).output().unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small-network training flags used throughout the tests.
pub fn small_train<'a>(data: &'a str, out: &'a str, epochs: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "train",
        "--data-dir",
        data,
        "--out-dir",
        out,
        "--epochs",
        epochs,
        "--batch-size",
        "8",
        "--input-size",
        "32",
        "--width-scale",
        "1/8",
        "--seed",
        "5",
    ];
    v.extend_from_slice(extra);
    v
}

pub fn parse(words: &[&str]) -> plantnet_cli::Command {
    use clap::Parser;
    plantnet_cli::Cli::try_parse_from(args(words)).unwrap().command
}

/// Flat red, green and blue 16×16 images with a little fixed texture.
pub fn colour_tree(root: &Path, per_class: usize) {
    use plantnet_core::imgproc::Image;
    for (c, name) in ["Red", "Green", "Blue"].iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let level = 0.5 + 0.4 * i as f32 / per_class as f32;
            let img = Image::from_fn(16, 16, 3, |x, y| {
                (0..3)
                    .map(|k| if k == c { level } else { 0.2 } + ((x * 7 + y * 13 + k * 5 + i) % 11) as f32 * 0.01)
                    .collect()
            })
            .unwrap();
            img.save_png(dir.join(format!("{i:02}.png"))).unwrap();
        }
    }
}
