use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{evaluate, EvalSettings, Evaluation, IndexScheduler, LookaheadScheduler, SizeAwareScheduler};
use super::{ExperimentConfig, PolicySpec};
use crate::arm::{Arm, NoisyArm};
use crate::arms::{
    DeadlineArm, DeadlineState, EnvKind, RecoveringArm, RecoveringClass, RecoveringState, WirelessArm,
    WirelessParams,
};
use crate::baselines::{default_candidates, qwic_train, QwicConfig};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mlp};
use crate::oracle::{index_table, DpSettings, FiniteArm};
use crate::rng::RngStream;
use crate::training::train;

const LABEL_LOADS: u64 = 0x20;
const LABEL_NOISE: u64 = 0x21;
const LABEL_QWIC: u64 = 0x22;
const Z_MAX: u16 = 20;
const GOOD_PROBS: [f64; 2] = [0.75, 0.1];

/// Arm type of every arm id: recovering arms are split into quarters by
/// class (remainder to the first classes), wireless arms into halves by
/// good-channel probability (0.75 first, then 0.1).
pub fn arm_types(env: EnvKind, n: usize) -> Vec<usize> {
    let split = |k: usize| -> Vec<usize> {
        (0..k).flat_map(|t| std::iter::repeat_n(t, n / k + usize::from(t < n % k))).collect()
    };
    match env {
        EnvKind::Deadline => vec![0; n],
        EnvKind::Recovering => split(4),
        EnvKind::Wireless => split(2),
    }
}

fn type_count(env: EnvKind) -> usize {
    match env {
        EnvKind::Deadline => 1,
        EnvKind::Recovering => 4,
        EnvKind::Wireless => 2,
    }
}

/// The N arms of an experiment.
#[derive(Debug, Clone)]
pub enum Instance {
    Deadline(Vec<DeadlineArm>),
    Recovering(Vec<RecoveringArm>),
    Wireless(Vec<WirelessArm>),
}

fn recovering_proto(class: RecoveringClass) -> Result<RecoveringArm> {
    RecoveringArm::new(class.params(), Z_MAX)
}

fn wireless_proto(q: f64) -> Result<WirelessArm> {
    WirelessArm::new(WirelessParams::with_good_prob(q))
}

impl Instance {
    pub fn build(env: EnvKind, n: usize) -> Result<Self> {
        let types = arm_types(env, n);
        Ok(match env {
            EnvKind::Deadline => Self::Deadline(vec![DeadlineArm::default(); n]),
            EnvKind::Recovering => Self::Recovering(
                types
                    .iter()
                    .map(|&t| recovering_proto(RecoveringClass::ALL[t]))
                    .collect::<Result<_>>()?,
            ),
            EnvKind::Wireless => {
                Self::Wireless(types.iter().map(|&t| wireless_proto(GOOD_PROBS[t])).collect::<Result<_>>()?)
            }
        })
    }
}

fn dp(config: &ExperimentConfig) -> DpSettings {
    DpSettings {
        discount: config.discount,
        horizon: config.horizon,
    }
}

fn settings(config: &ExperimentConfig) -> EvalSettings {
    EvalSettings {
        runs: config.runs,
        horizon: config.horizon,
        discount: config.discount,
        seed: config.seed,
        record_activations: false,
    }
}

fn oracle_maps<A: FiniteArm>(protos: &[A], config: &ExperimentConfig) -> Result<Vec<HashMap<A::State, f64>>> {
    protos
        .iter()
        .map(|a| Ok(index_table(&a.model()?, &dp(config), config.tol)?.to_map()))
        .collect()
}

fn qwic_maps<A: FiniteArm>(protos: &[A], config: &ExperimentConfig) -> Result<Vec<HashMap<A::State, f64>>> {
    protos
        .iter()
        .enumerate()
        .map(|(t, a)| {
            let table = index_table(&a.model()?, &dp(config), config.tol)?;
            let mut q = QwicConfig::new(
                default_candidates(&table.values(), config.qwic_candidates),
                config.qwic_episodes(),
                crate::rng::mix_seed(config.seed, &[LABEL_QWIC, t as u64]),
            );
            q.discount = config.discount;
            q.horizon = config.horizon;
            Ok(qwic_train(a, &q)?.index_map())
        })
        .collect()
}

fn by_table<A: Arm, I>(
    arms: &[A],
    types: &[usize],
    init: I,
    maps: &[HashMap<A::State, f64>],
    config: &ExperimentConfig,
) -> Result<Evaluation>
where
    I: FnMut(usize) -> Result<Vec<A::State>>,
{
    let mut policy = IndexScheduler(|i: usize, s: &A::State| {
        maps[types[i]]
            .get(s)
            .copied()
            .ok_or_else(|| Error::InvalidState(format!("{s:?} missing from index table")))
    });
    evaluate(arms, config.m, init, &mut policy, &settings(config))
}

fn by_nets<A: Arm, I>(
    arms: &[A],
    types: &[usize],
    init: I,
    nets: &[Mlp],
    config: &ExperimentConfig,
) -> Result<Evaluation>
where
    I: FnMut(usize) -> Result<Vec<A::State>>,
{
    let mut buf = vec![0.0; arms[0].feature_dim()];
    let mut policy = IndexScheduler(|i: usize, s: &A::State| {
        arms[i].features(s, &mut buf);
        nets[types[i]].forward(&buf)
    });
    evaluate(arms, config.m, init, &mut policy, &settings(config))
}

fn wireless_init(arms: &[WirelessArm], seed: u64) -> impl FnMut(usize) -> Result<Vec<crate::arms::WirelessState>> + '_ {
    move |run| {
        let mut rng = RngStream::derived(seed, &[LABEL_LOADS, run as u64], 0);
        Ok(arms.iter().map(|a| a.sample_initial(&mut rng)).collect())
    }
}

fn prototypes_recovering() -> Result<Vec<RecoveringArm>> {
    RecoveringClass::ALL.iter().map(|&c| recovering_proto(c)).collect()
}

/// One network per arm type from either one shared checkpoint or one per
/// type.
pub fn load_networks(paths: &[PathBuf], env: EnvKind) -> Result<Vec<Mlp>> {
    let k = type_count(env);
    let nets = paths
        .iter()
        .map(|p| Checkpoint::load(p).map(|c| c.net))
        .collect::<Result<Vec<_>>>()?;
    match nets.len() {
        1 => Ok(vec![nets[0].clone(); k]),
        n if n == k => Ok(nets),
        n => Err(Error::InvalidArgument(format!(
            "{env} needs 1 or {k} checkpoints (one per arm type), got {n}"
        ))),
    }
}

/// Evaluates index networks (one per arm type) on the configured instance.
pub fn evaluate_networks(config: &ExperimentConfig, nets: &[Mlp]) -> Result<Evaluation> {
    config.validate()?;
    let types = arm_types(config.env, config.n);
    if nets.len() != type_count(config.env) {
        return Err(Error::DimensionMismatch {
            expected: type_count(config.env),
            got: nets.len(),
        });
    }
    match Instance::build(config.env, config.n)? {
        Instance::Deadline(arms) => {
            let n = arms.len();
            by_nets(&arms, &types, |_| Ok(vec![DeadlineState::EMPTY; n]), nets, config)
        }
        Instance::Recovering(arms) => {
            let n = arms.len();
            by_nets(&arms, &types, |_| Ok(vec![RecoveringState(1); n]), nets, config)
        }
        Instance::Wireless(arms) => by_nets(&arms, &types, wireless_init(&arms, config.seed), nets, config),
    }
}

fn unsupported(config: &ExperimentConfig) -> Error {
    Error::Unsupported(format!("policy {} is not available for {}", config.policy, config.env))
}

/// Runs `config.policy` on the configured N-arm instance.
pub fn evaluate_config(config: &ExperimentConfig) -> Result<Evaluation> {
    config.validate()?;
    if let PolicySpec::NeurWin { checkpoints } = &config.policy {
        let nets = load_networks(checkpoints, config.env)?;
        return evaluate_networks(config, &nets);
    }
    let types = arm_types(config.env, config.n);
    match Instance::build(config.env, config.n)? {
        Instance::Deadline(arms) => {
            let n = arms.len();
            let init = |_| Ok(vec![DeadlineState::EMPTY; n]);
            let maps = match config.policy {
                PolicySpec::WhittleOracle => oracle_maps(&arms[..1], config)?,
                PolicySpec::Qwic => qwic_maps(&arms[..1], config)?,
                _ => return Err(unsupported(config)),
            };
            by_table(&arms, &types, init, &maps, config)
        }
        Instance::Recovering(arms) => {
            let n = arms.len();
            let init = |_| Ok(vec![RecoveringState(1); n]);
            let maps = match &config.policy {
                PolicySpec::WhittleOracle => oracle_maps(&prototypes_recovering()?, config)?,
                PolicySpec::Qwic => qwic_maps(&prototypes_recovering()?, config)?,
                PolicySpec::Lookahead { depth, beam_width } => {
                    let mut p = LookaheadScheduler::new(arms.clone(), *depth, beam_width.unwrap_or(config.beam_width));
                    return evaluate(&arms, config.m, init, &mut p, &settings(config));
                }
                _ => return Err(unsupported(config)),
            };
            by_table(&arms, &types, init, &maps, config)
        }
        Instance::Wireless(arms) => match config.policy {
            PolicySpec::SizeAware => {
                let mut p = SizeAwareScheduler {
                    params: arms.iter().map(|a| a.params().clone()).collect(),
                };
                evaluate(&arms, config.m, wireless_init(&arms, config.seed), &mut p, &settings(config))
            }
            _ => Err(unsupported(config)),
        },
    }
}

/// Trains one network per arm type, on rewards perturbed at `noise_level`.
pub fn train_arm_types(config: &ExperimentConfig, noise_level: f64) -> Result<Vec<Mlp>> {
    fn one<A: Arm>(arm: A, t: usize, level: f64, config: &ExperimentConfig) -> Result<Mlp> {
        let rng = RngStream::derived(config.seed, &[LABEL_NOISE, t as u64], 0);
        let noisy = NoisyArm::new(arm, level, rng)?;
        Ok(train(&noisy, &config.training)?.final_checkpoint().net.clone())
    }
    match config.env {
        EnvKind::Deadline => Ok(vec![one(DeadlineArm::default(), 0, noise_level, config)?]),
        EnvKind::Recovering => prototypes_recovering()?
            .into_iter()
            .enumerate()
            .map(|(t, a)| one(a, t, noise_level, config))
            .collect(),
        EnvKind::Wireless => GOOD_PROBS
            .iter()
            .enumerate()
            .map(|(t, &q)| one(wireless_proto(q)?, t, noise_level, config))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub episodes: u64,
    pub mean: f64,
    pub std: f64,
}

impl CurveRow {
    pub fn csv(rows: &[CurveRow]) -> String {
        let mut out = String::from("episodes_trained,mean,std\n");
        for r in rows {
            out.push_str(&format!("{},{},{}\n", r.episodes, r.mean, r.std));
        }
        out
    }
}

fn checkpoint_episodes(dir: &Path) -> Result<Vec<u64>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut episodes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(ep) = name.strip_prefix("ckpt_").and_then(|r| r.strip_suffix(".txt")) {
            if let Ok(ep) = ep.parse::<u64>() {
                episodes.push(ep);
            }
        }
    }
    episodes.sort_unstable();
    if episodes.is_empty() {
        return Err(Error::InvalidArgument(format!("no checkpoints in {}", dir.display())));
    }
    Ok(episodes)
}

/// Evaluates every checkpoint found in `dirs` (one directory per arm type,
/// or one shared by all) under the same run seeds.
pub fn learning_curve(config: &ExperimentConfig, dirs: &[PathBuf]) -> Result<Vec<CurveRow>> {
    let first = dirs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no checkpoint directory given".into()))?;
    let episodes = checkpoint_episodes(first)?;
    let mut rows = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let paths: Vec<PathBuf> = dirs.iter().map(|d| d.join(Checkpoint::file_name(ep))).collect();
        let nets = load_networks(&paths, config.env)?;
        let e = evaluate_networks(config, &nets)?;
        rows.push(CurveRow {
            episodes: ep,
            mean: e.mean,
            std: e.std,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyRow {
    pub noise_level: f64,
    pub mean: f64,
    pub std: f64,
}

impl NoisyRow {
    pub fn csv(rows: &[NoisyRow]) -> String {
        let mut out = String::from("noise_level,mean,std\n");
        for r in rows {
            out.push_str(&format!("{},{},{}\n", r.noise_level, r.mean, r.std));
        }
        out
    }
}

/// Trains on noisy simulators and evaluates on the clean arms.
pub fn noisy_sweep(config: &ExperimentConfig, levels: &[f64]) -> Result<Vec<NoisyRow>> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no noise levels given".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("noise level {l} must be nonnegative")));
    }
    levels
        .iter()
        .map(|&level| {
            let nets = train_arm_types(config, level)?;
            let e = evaluate_networks(config, &nets)?;
            Ok(NoisyRow {
                noise_level: level,
                mean: e.mean,
                std: e.std,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixes_sum_to_n() {
        assert_eq!(arm_types(EnvKind::Recovering, 10), vec![0, 0, 0, 1, 1, 1, 2, 2, 3, 3]);
        assert_eq!(arm_types(EnvKind::Wireless, 4), vec![0, 0, 1, 1]);
        assert_eq!(arm_types(EnvKind::Wireless, 5), vec![0, 0, 0, 1, 1]);
        assert_eq!(arm_types(EnvKind::Deadline, 3), vec![0, 0, 0]);
        for n in 1..40 {
            assert_eq!(arm_types(EnvKind::Recovering, n).len(), n);
        }
    }

    fn quick(env: EnvKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(env);
        c.runs = 3;
        c.horizon = 40;
        c.training.episodes = 10;
        c.training.checkpoint_interval = 5;
        c
    }

    #[test]
    fn policies_run_where_supported() {
        for (env, specs) in [
            (EnvKind::Deadline, vec!["whittle-oracle"]),
            (EnvKind::Recovering, vec!["whittle-oracle", "lookahead:d=2"]),
            (EnvKind::Wireless, vec!["size-aware"]),
        ] {
            for spec in specs {
                let mut c = quick(env);
                c.policy = spec.parse().unwrap();
                let e = evaluate_config(&c).unwrap();
                assert_eq!(e.runs.len(), 3);
            }
        }
        let mut c = quick(EnvKind::Wireless);
        c.policy = PolicySpec::Qwic;
        assert!(matches!(evaluate_config(&c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn missing_checkpoint_names_path() {
        let mut c = quick(EnvKind::Deadline);
        c.policy = "neurwin:ckpt=/nonexistent/ckpt_1.txt".parse().unwrap();
        let err = evaluate_config(&c).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/ckpt_1.txt"), "{err}");
    }

    #[test]
    fn wireless_loads_shared_across_policies() {
        let arms = match Instance::build(EnvKind::Wireless, 4).unwrap() {
            Instance::Wireless(a) => a,
            _ => unreachable!(),
        };
        let mut a = wireless_init(&arms, 5);
        let mut b = wireless_init(&arms, 5);
        assert_eq!(a(3).unwrap(), b(3).unwrap());
        assert_ne!(a(3).unwrap(), a(4).unwrap());
    }

    #[test]
    fn noise_zero_matches_clean_training() {
        let c = quick(EnvKind::Deadline);
        let clean = train(&DeadlineArm::default(), &c.training).unwrap();
        let nets = train_arm_types(&c, 0.0).unwrap();
        assert_eq!(nets[0], clean.final_checkpoint().net);
        let rows = noisy_sweep(&c, &[0.0]).unwrap();
        let direct = evaluate_networks(&c, &nets).unwrap();
        assert_eq!((rows[0].mean, rows[0].std), (direct.mean, direct.std));
        assert!(noisy_sweep(&c, &[]).is_err());
    }

    #[test]
    fn curve_over_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let c = quick(EnvKind::Deadline);
        train(&DeadlineArm::default(), &c.training).unwrap().write(dir.path()).unwrap();
        let rows = learning_curve(&c, &[dir.path().to_path_buf()]).unwrap();
        assert_eq!(rows.iter().map(|r| r.episodes).collect::<Vec<_>>(), vec![5, 10]);
        assert_eq!(rows, learning_curve(&c, &[dir.path().to_path_buf()]).unwrap());
        let empty = tempfile::tempdir().unwrap();
        assert!(learning_curve(&c, &[empty.path().to_path_buf()]).is_err());
    }
}
