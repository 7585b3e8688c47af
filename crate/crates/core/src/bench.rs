//! Layer benchmarks: wall time, multiply counts and error against the direct
//! oracle for each engine on identical seeded data.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engines::{arithmetic_report, ConvSpec, Engine, LanceConfig, LanceMode};
use crate::error::{invalid, Error, Result};
use crate::lowpgemm::{multiply_counter, reset_multiply_counter};
use crate::metrics::{max_abs_diff, rel_frobenius};
use crate::quant::Granularity;
use crate::synthetic::random_layer;

pub const MIN_TIMED_RUNS: usize = 5;

/// Engines timed per layer, in report order.
pub const BENCH_ENGINES: [Engine; 4] = [
    Engine::Direct,
    Engine::WinogradFp,
    Engine::LanceFaithful,
    Engine::LanceGemm,
];

fn default_bits() -> u8 {
    8
}

fn default_granularity() -> String {
    "tile".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub name: String,
    #[serde(default = "one")]
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "default_bits")]
    pub bits_w: u8,
    #[serde(default = "default_bits")]
    pub bits_i: u8,
    #[serde(default = "default_granularity")]
    pub granularity: String,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl LayerConfig {
    pub fn spec(&self) -> Result<ConvSpec> {
        ConvSpec::new(self.n, self.c, self.h, self.w, self.k, self.pad)
    }

    pub fn granularity(&self) -> Result<Granularity> {
        Granularity::parse(&self.granularity).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "layer {}: unknown granularity {:?}",
                self.name, self.granularity
            ))
        })
    }

    /// Configuration used for `engine`. GEMM mode cannot run per-tile, so a
    /// per-tile layer falls back to per-position for that engine.
    pub fn lance_config(&self, engine: Engine) -> Result<LanceConfig> {
        let g = self.granularity()?;
        let cfg = match engine {
            Engine::LanceGemm => LanceConfig {
                bits_w: self.bits_w,
                bits_i: self.bits_i,
                granularity: if g == Granularity::PerTile {
                    Granularity::PerPosition
                } else {
                    g
                },
                mode: LanceMode::Gemm,
            },
            _ => LanceConfig::faithful(self.bits_w, self.bits_i, g),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?.check_winograd()?;
        for e in BENCH_ENGINES {
            self.lance_config(e)?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    List(Vec<LayerConfig>),
    Wrapped { layers: Vec<LayerConfig> },
}

/// Accepts a JSON array of layers or an object with a `layers` array.
pub fn parse_config(text: &str) -> Result<Vec<LayerConfig>> {
    let parsed: ConfigFile = serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("bench config: {e}")))?;
    let layers = match parsed {
        ConfigFile::List(l) => l,
        ConfigFile::Wrapped { layers } => layers,
    };
    for l in &layers {
        l.validate()
            .map_err(|e| Error::InvalidArgument(format!("layer {}: {e}", l.name)))?;
    }
    Ok(layers)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub layer: String,
    pub engine: String,
    pub granularity: String,
    pub bits_w: u8,
    pub bits_i: u8,
    pub threads: usize,
    pub runs: usize,
    pub wall_ns_median: u128,
    pub multiplies: u64,
    pub ratio_vs_direct: f64,
    pub tile_waste: bool,
    pub max_abs_err: f64,
    pub rel_frobenius_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub threads: usize,
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "layer,engine,granularity,bits_w,bits_i,threads,runs,wall_ns_median,multiplies,ratio_vs_direct,tile_waste,max_abs_err,rel_frobenius_err";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&r.layer),
                r.engine,
                r.granularity,
                r.bits_w,
                r.bits_i,
                r.threads,
                r.runs,
                r.wall_ns_median,
                r.multiplies,
                r.ratio_vs_direct,
                r.tile_waste,
                r.max_abs_err,
                r.rel_frobenius_err
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs every layer on the current rayon pool; `threads` is recorded as-is.
pub fn run_bench(layers: &[LayerConfig], threads: usize, runs: usize) -> Result<BenchReport> {
    if runs < MIN_TIMED_RUNS {
        return invalid(format!("need at least {MIN_TIMED_RUNS} timed runs, got {runs}"));
    }
    let mut rows = Vec::with_capacity(layers.len() * BENCH_ENGINES.len());
    for layer in layers {
        let spec = layer.spec()?;
        let (x, w) = random_layer(&spec, layer.seed);
        let reference = Engine::Direct.run(&x, &w, &spec, &LanceConfig::default())?;
        let mut direct_mults = None;
        for engine in BENCH_ENGINES {
            let cfg = layer.lance_config(engine)?;
            reset_multiply_counter();
            let y = engine.run(&x, &w, &spec, &cfg)?;
            let multiplies = multiply_counter();
            let direct = *direct_mults.get_or_insert(multiplies);
            let mut times = Vec::with_capacity(runs);
            for _ in 0..runs {
                let start = Instant::now();
                let out = engine.run(&x, &w, &spec, &cfg)?;
                times.push(start.elapsed().as_nanos());
                std::hint::black_box(out);
            }
            times.sort_unstable();
            rows.push(BenchRow {
                layer: layer.name.clone(),
                engine: engine.name().into(),
                granularity: if engine == Engine::LanceFaithful || engine == Engine::LanceGemm {
                    cfg.granularity.name().into()
                } else {
                    "-".into()
                },
                bits_w: layer.bits_w,
                bits_i: layer.bits_i,
                threads,
                runs,
                wall_ns_median: times[runs / 2],
                multiplies,
                ratio_vs_direct: direct as f64 / multiplies as f64,
                tile_waste: arithmetic_report(&spec, engine).tile_waste,
                max_abs_err: max_abs_diff(y.data(), reference.data()),
                rel_frobenius_err: rel_frobenius(y.data(), reference.data()),
            });
        }
    }
    Ok(BenchReport { threads, rows })
}

/// `(csv, json)` paths derived from `--out`.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("csv"), out.with_extension("json"))
}

pub fn write_report(report: &BenchReport, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let (csv, json) = report_paths(out);
    fs::write(&csv, report.to_csv())?;
    fs::write(&json, report.to_json())?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(name: &str, h: usize, pad: usize) -> LayerConfig {
        LayerConfig {
            name: name.into(),
            n: 1,
            c: 2,
            h,
            w: h,
            k: 3,
            pad,
            bits_w: 8,
            bits_i: 8,
            granularity: "tile".into(),
            seed: 3,
        }
    }

    #[test]
    fn parses_both_config_shapes() {
        let a = parse_config(r#"[{"name":"a","c":2,"h":6,"w":6,"k":3}]"#).unwrap();
        let b = parse_config(r#"{"layers":[{"name":"a","c":2,"h":6,"w":6,"k":3}]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].granularity, "tile");
        assert!(parse_config("[]").unwrap().is_empty());
    }

    #[test]
    fn rejects_invalid_layers() {
        assert!(parse_config(r#"[{"name":"a","c":2,"h":1,"w":6,"k":3}]"#).is_err());
        assert!(parse_config(r#"[{"name":"a","c":2,"h":6,"w":6,"k":3,"bits_w":9}]"#).is_err());
        assert!(parse_config(r#"[{"name":"a","c":2,"h":6,"w":6,"k":3,"granularity":"row"}]"#).is_err());
        assert!(parse_config(r#"[{"name":"a","c":2,"h":6,"w":6,"k":3,"stride":2}]"#).is_err());
        assert!(parse_config("{").is_err());
    }

    #[test]
    fn one_layer_gives_four_rows() {
        let report = run_bench(&[layer("even", 6, 1)], 1, MIN_TIMED_RUNS).unwrap();
        assert_eq!(report.rows.len(), 4);
        let engines: Vec<&str> = report.rows.iter().map(|r| r.engine.as_str()).collect();
        assert_eq!(engines, ["direct", "winograd", "lance-faithful", "lance-gemm"]);
        assert_eq!(report.rows[0].ratio_vs_direct, 1.0);
        for r in &report.rows[1..] {
            assert_eq!(r.ratio_vs_direct, 2.25);
            assert!(!r.tile_waste);
        }
        assert_eq!(report.rows[3].granularity, "position");
        assert_eq!(report.to_csv().lines().count(), 5);
    }

    #[test]
    fn odd_output_sets_waste_flag() {
        let report = run_bench(&[layer("odd", 5, 0)], 1, MIN_TIMED_RUNS).unwrap();
        assert!(!report.rows[0].tile_waste);
        assert!(report.rows[1..].iter().all(|r| r.tile_waste));
    }

    #[test]
    fn too_few_runs_rejected() {
        assert!(run_bench(&[], 1, 3).is_err());
        assert!(run_bench(&[], 1, 5).unwrap().rows.is_empty());
    }
}
