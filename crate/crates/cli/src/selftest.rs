//! `banditlab selftest`: a fast, self-contained invariant suite. Prints one
//! line per check; exits nonzero when any check fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use banditlab_core::contexts::{co_click_matrix, similarity_vectors, SessionRecord};
use banditlab_core::numerics::{cholesky_factor, mvn_sample, paired_t_test, pca_fit, TriFactor};
use banditlab_core::policies::{PolicyInstance, PolicyKind};
use banditlab_core::replay::{replicate_with_dropout, replay_run, ReplayEvent};
use banditlab_core::seed;
use banditlab_core::synthenv::{corpus_diagnostics, generate_corpus, GeneratorParams};

use crate::CliError;

struct Harness {
    failures: usize,
}

impl Harness {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("ok   {name}");
        } else {
            println!("FAIL {name}: {detail}");
            self.failures += 1;
        }
    }
}

pub fn run() -> Result<(), CliError> {
    let mut h = Harness { failures: 0 };

    // Cholesky: factor, reject indefinite, rank-one vs refactorization.
    {
        let l = cholesky_factor(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let ok = (l.get(0, 0) - 2.0).abs() < 1e-12 && (l.get(1, 1) - 2f64.sqrt()).abs() < 1e-12;
        h.check("cholesky_factor matches the 2x2 hand result", ok, format!("{l:?}"));
        let rejected = cholesky_factor(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err();
        h.check("indefinite matrices are rejected", rejected, String::new());
    }
    {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut factor = TriFactor::identity(d);
        let mut direct = vec![vec![0.0; d]; d];
        for (i, row) in direct.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..200 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            factor.rank_one_update(&x).unwrap();
            for i in 0..d {
                for j in 0..d {
                    direct[i][j] += x[i] * x[j];
                }
            }
        }
        let back = factor.reconstruct();
        let worst = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (back[i][j] - direct[i][j]).abs())
            .fold(0.0f64, f64::max);
        h.check(
            "rank-one chain tracks the directly accumulated matrix",
            worst < 1e-8,
            format!("drift {worst}"),
        );
    }

    // Gaussian sampling consumes exactly dim draws and lands on the mean.
    {
        let l = TriFactor::identity(3);
        let mut consumed = 0;
        let s = mvn_sample(&[1.0, 2.0, 3.0], &l, || {
            consumed += 1;
            0.0
        })
        .unwrap();
        h.check(
            "mvn_sample consumes dim draws and shifts by the mean",
            consumed == 3 && s == vec![1.0, 2.0, 3.0],
            format!("consumed {consumed}, sample {s:?}"),
        );
    }

    // PCA: the 2x2 line example and projection of the mean.
    {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let model = pca_fit(&rows, 1).unwrap();
        let c = &model.components()[0];
        let target = std::f64::consts::FRAC_1_SQRT_2;
        let ok = (c[0] - target).abs() < 1e-9 && (c[1] - target).abs() < 1e-9;
        h.check("pca_fit recovers the diagonal direction", ok, format!("{c:?}"));
    }

    // Paired t-test: frozen example plus both zero-variance edges.
    {
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        let ok = (r.t_stat - 2.0 * 3f64.sqrt()).abs() < 1e-12 && (r.p_two_sided - 0.0742).abs() < 5e-5;
        h.check("paired t-test matches the dof-2 hand result", ok, format!("{r:?}"));
        let same = paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let shifted = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        h.check(
            "zero-variance edges are totalized",
            same.p_two_sided == 1.0 && shifted.p_two_sided == 0.0,
            format!("{same:?} / {shifted:?}"),
        );
    }

    // Constant-intuition reduction on a short stream.
    {
        let arms = 3;
        let d = 4;
        let mut cfts = PolicyInstance::new(PolicyKind::Cfts, arms, d, None, 7).unwrap();
        let mut ts = PolicyInstance::new(PolicyKind::Ts, arms, d, None, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agree = true;
        for _ in 0..200 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let label = rng.random_range(0..arms);
            let a = cfts.select_arm(&x, 1).unwrap();
            let b = ts.select_arm(&x, 1).unwrap();
            agree &= a == b;
            let reward = u8::from(a.arm == label);
            cfts.update(&x, 1, a.arm, reward).unwrap();
            ts.update(&x, 1, b.arm, reward).unwrap();
        }
        h.check(
            "CF-TS collapses onto TS under a constant intuition",
            agree,
            String::new(),
        );
    }

    // Augmentation: count law and survivor subsets.
    {
        let sessions: Vec<SessionRecord> = (0..20)
            .map(|i| SessionRecord {
                session_id: format!("s{i}"),
                clicked_images: (0..5).map(|j| format!("img{j}")).collect(),
                intuition: 0,
                true_label: 0,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let events = replicate_with_dropout(&sessions, 4, 0.3, &mut rng).unwrap();
        let ok = events.len() == 80
            && events.iter().all(|e| {
                !e.surviving_images.is_empty()
                    && e.surviving_images.iter().all(|img| img.starts_with("img"))
            });
        h.check("augmentation emits r replicas per session", ok, String::new());
    }

    // Replay identities for the two fixed baselines.
    {
        let events: Vec<ReplayEvent> = (0..30)
            .map(|i| ReplayEvent {
                source_session_id: format!("s{i}"),
                surviving_images: vec!["img".into()],
                context: vec![1.0, (i % 2) as f64],
                intuition: i % 3,
                true_label: (i + 1) % 3,
            })
            .collect();
        let mut obs = PolicyInstance::new(PolicyKind::Obs, 3, 2, None, 1).unwrap();
        let traj = replay_run(&events, &mut obs, 30).unwrap();
        let ok = traj
            .rounds
            .iter()
            .zip(&events)
            .all(|(r, e)| r.arm == e.intuition && r.reward == u8::from(e.intuition == e.true_label));
        h.check("observational replay is pure pass-through", ok, String::new());
    }

    // Generator anchors on a mid-size corpus.
    {
        let params = GeneratorParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::stream_seed(5, "selftest"));
        let corpus = generate_corpus(&params, 20_000, &mut rng).unwrap();
        let diag = corpus_diagnostics(&corpus, params.arms);
        let ok = (diag.observational_accuracy - params.expected_obs_accuracy()).abs() < 0.02;
        h.check(
            "generator hits the observational anchor",
            ok,
            format!("obs accuracy {}", diag.observational_accuracy),
        );
    }

    // Context invariance under click permutations.
    {
        let sessions = vec![
            SessionRecord {
                session_id: "a".into(),
                clicked_images: vec!["1".into(), "2".into()],
                intuition: 0,
                true_label: 0,
            },
            SessionRecord {
                session_id: "b".into(),
                clicked_images: vec!["1".into(), "2".into(), "3".into()],
                intuition: 0,
                true_label: 0,
            },
        ];
        let sim = similarity_vectors(&co_click_matrix(&sessions));
        let row = sim.row("1").unwrap();
        let ok = (row[1] - 2.0 / 3.0).abs() < 1e-15 && (row[2] - 1.0 / 3.0).abs() < 1e-15;
        h.check("co-click similarity matches the hand example", ok, format!("{row:?}"));
    }

    if h.failures == 0 {
        println!("selftest: all checks passed");
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "selftest: {} check(s) failed",
            h.failures
        )))
    }
}
