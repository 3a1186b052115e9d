//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measurements and runtime; the process fails if any criterion fails.
//! Pass a substring as the first argument to run a subset.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uncalmocap::app;
use uncalmocap::bodymodel::{BodyTemplate, CapsuleSpec, MotionSequence, MOTION_DIM};
use uncalmocap::denoise::{affinity, build_matrices, denoise_sequence, select_exhaustive, select_views, DenoiseConfig, SelectionObjective};
use uncalmocap::eval::{camera_errors, rigid_align};
use uncalmocap::geometry::{
    decompose_to_extrinsics, estimate_fundamental, point_ray_distance, so3, triangulate, Camera, Extrinsics, Intrinsics, PlueckerRay,
    Point3, RansacConfig,
};
use uncalmocap::optimizer::{OptimizerConfig, PersonVariables, Problem, SceneState, SceneVariables, Terms};
use uncalmocap::pipeline::{initialize_cameras, run, PipelineConfig, PriorSettings};
use uncalmocap::prior::{latent_linear_penalty, train_linear_backend, GruArchitecture, GruVae, PriorBackend};
use uncalmocap::synth::{generate, motion_corpus, score_filter, SceneConfig};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn look_at(center: Point3, target: Point3) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let x = z.cross(&Vector3::z()).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

// ---------------------------------------------------------------- geometry

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst_inv = 0.0f64;
    let mut worst_dist = 0.0f64;
    let mut worst_tri = 0.0f64;
    for _ in 0..2000 {
        let p = Point3::from_fn(|_, _| rng.random_range(-5000.0..5000.0));
        let d = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if d.norm() < 1e-3 {
            continue;
        }
        let ray = PlueckerRay::from_point_direction(&p, &d);
        worst_inv = worst_inv.max((ray.n.norm() - 1.0).abs()).max((ray.n.dot(&ray.l) / p.norm().max(1.0)).abs());
        ensure(ray.satisfies_invariants(), "ray fails its invariant check")?;
        // Closest point on p + s·d by minimizing the quadratic in s.
        let x = Point3::from_fn(|_, _| rng.random_range(-5000.0..5000.0));
        let s = (x - p).dot(&d) / d.dot(&d);
        let oracle = (p + d * s - x).norm();
        worst_dist = worst_dist.max((point_ray_distance(&x, &ray) - oracle).abs() / oracle.max(1.0));
    }
    for _ in 0..500 {
        let x = Point3::from_fn(|_, _| rng.random_range(-2000.0..2000.0));
        let k = rng.random_range(2..7);
        let rays: Vec<PlueckerRay> = (0..k)
            .map(|_| {
                let c = Point3::from_fn(|_, _| rng.random_range(-6000.0..6000.0));
                PlueckerRay::from_point_direction(&c, &(x - c))
            })
            .collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let got = triangulate(&rays, Some(&w)).map_err(|e| e.to_string())?;
        worst_tri = worst_tri.max((got - x).norm());
    }
    ensure(worst_inv < 1e-12, format!("Plücker invariant violation {worst_inv:.2e}"))?;
    ensure(worst_dist < 1e-9, format!("point-ray distance off by {worst_dist:.2e} (relative)"))?;
    ensure(worst_tri < 1e-6, format!("triangulation error {worst_tri:.2e} mm"))?;

    let k = Intrinsics::new(1100.0, 1100.0, 960.0, 540.0, 0.0).unwrap();
    let mut worst_epi = 0.0f64;
    let mut worst_rot = 0.0f64;
    let mut worst_dir = 0.0f64;
    for _ in 0..20 {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let b = a + rng.random_range(0.6..2.4);
        let ca = Point3::new(4500.0 * a.cos(), 4500.0 * a.sin(), rng.random_range(1800.0..2600.0));
        let cb = Point3::new(4500.0 * b.cos(), 4500.0 * b.sin(), rng.random_range(1800.0..2600.0));
        let target = Point3::new(0.0, 0.0, 900.0);
        let cam_a = Camera::new(0, k, Extrinsics::from_center(&look_at(ca, target), &ca));
        let cam_b = Camera::new(1, k, Extrinsics::from_center(&look_at(cb, target), &cb));
        let corrs: Vec<(Vector2<f64>, Vector2<f64>)> = (0..60)
            .map(|_| {
                let x = Point3::new(rng.random_range(-1500.0..1500.0), rng.random_range(-1500.0..1500.0), rng.random_range(0.0..1800.0));
                (cam_a.project(&x).unwrap(), cam_b.project(&x).unwrap())
            })
            .collect();
        let est =
            estimate_fundamental(&corrs, &RansacConfig { threshold_px: 0.5, ..RansacConfig::default() }).map_err(|e| e.to_string())?;
        let f = est.f / est.f.norm();
        for (xa, xb) in &corrs {
            let r = Vector3::new(xb.x, xb.y, 1.0).dot(&(f * Vector3::new(xa.x, xa.y, 1.0)));
            worst_epi = worst_epi.max(r.abs());
        }
        let rel = decompose_to_extrinsics(&est.f, &k, &k, &corrs, &est.inliers).map_err(|e| e.to_string())?;
        let r_true = cam_b.extrinsics.rotation_matrix() * cam_a.extrinsics.rotation_matrix().transpose();
        let t_true = cam_b.extrinsics.translation - r_true * cam_a.extrinsics.translation;
        worst_rot = worst_rot.max(so3::angle_between(&rel.extrinsics.rotation_matrix(), &r_true));
        let cos = rel.extrinsics.translation.normalize().dot(&t_true.normalize()).clamp(-1.0, 1.0);
        worst_dir = worst_dir.max(cos.acos());
    }
    ensure(worst_epi < 1e-8, format!("max |x'ᵀFx| = {worst_epi:.2e}"))?;
    ensure(
        worst_rot < 1e-6 && worst_dir < 1e-6,
        format!("relative pose error {worst_rot:.2e} rad, baseline direction {worst_dir:.2e} rad"),
    )?;
    Ok(format!(
        "invariants {worst_inv:.1e}, distance {worst_dist:.1e}, triangulation {worst_tri:.1e} mm, |x'ᵀFx| {worst_epi:.1e}, rotation {worst_rot:.1e} rad, baseline {worst_dir:.1e} rad"
    ))
}

// ---------------------------------------------------------------- denoise

fn ring(n: usize, rng: &mut ChaCha8Rng) -> Vec<Camera> {
    let k = Intrinsics::new(1000.0, 1000.0, 960.0, 540.0, 0.0).unwrap();
    (0..n)
        .map(|v| {
            let a = std::f64::consts::TAU * v as f64 / n as f64 + rng.random_range(-0.2..0.2);
            let c = Point3::new(4500.0 * a.cos(), 4500.0 * a.sin(), rng.random_range(1800.0..2600.0));
            Camera::new(v, k, Extrinsics::from_center(&look_at(c, Point3::new(0.0, 0.0, 1000.0)), &c))
        })
        .collect()
}

fn denoise() -> Outcome {
    let scene = generate(&SceneConfig::default()).map_err(|e| e.to_string())?;
    let out = denoise_sequence(&scene.observations, &scene.truth.cameras, &DenoiseConfig::default()).map_err(|e| e.to_string())?;
    let score = score_filter(&scene.observations, &scene.truth.events, |v, f, t| out.is_kept(v, f, t));
    let (excl, fr) = (score.exclusion_rate(), score.false_rejection_rate());
    ensure(score.corrupted > 0, "scene has no corrupted records")?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = DenoiseConfig::default();
    let greedy_cfg = DenoiseConfig { exact_limit: 0, ..DenoiseConfig::default() };
    let (mut agree, mut agree_greedy) = (0, 0);
    for _ in 0..100 {
        let v = rng.random_range(3..=12);
        let cams = ring(v, &mut rng);
        let x = Point3::new(rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), rng.random_range(100.0..1600.0));
        let other = x + Point3::new(rng.random_range(-1500.0..1500.0), rng.random_range(-1500.0..1500.0), rng.random_range(-300.0..300.0));
        let prev = x + Point3::from_fn(|_, _| rng.random_range(-40.0..40.0));
        let rays: Vec<Option<PlueckerRay>> = cams
            .iter()
            .map(|c| {
                let target = if rng.random_bool(0.25) { other } else { x };
                let px = c.project(&target).unwrap() + Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                Some(c.pixel_to_ray(&px))
            })
            .collect();
        let mats = build_matrices(&rays, Some(&prev)).map_err(|e| e.to_string())?;
        let w = affinity(&mats, &cfg);
        let best = select_exhaustive(&w, &mats.valid, SelectionObjective::ThresholdedSum, cfg.inclusion_threshold);
        let matches = |s: Option<f64>| s.is_some_and(|o| (o - best.objective).abs() < 1e-9);
        agree += usize::from(matches(select_views(&mats, &cfg).ok().map(|s| s.objective)));
        agree_greedy += usize::from(matches(select_views(&mats, &greedy_cfg).ok().map(|s| s.objective)));
    }
    let detail = format!(
        "excluded {:.1}% of {} corrupted records, false rejections {:.2}%, select_views {agree}/100 (greedy path {agree_greedy}/100)",
        100.0 * excl,
        score.corrupted,
        100.0 * fr
    );
    ensure(excl >= 0.95 && fr <= 0.02 && agree >= 95 && agree_greedy >= 95, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- prior

fn builtin_prior() -> PriorBackend {
    PriorSettings::default().builtin_linear().expect("built-in prior trains")
}

/// Central difference of `<upstream, decode(z)>` against `decode_gradient`.
fn decode_gradient_error(prior: &PriorBackend, z: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let upstream = DMatrix::from_fn(z.nrows(), MOTION_DIM, |_, _| rng.random_range(-1.0..1.0));
    let g = prior.decode_gradient(z, &upstream).unwrap();
    let loss = |z: &DMatrix<f64>| prior.decode_rows(z).unwrap().component_mul(&upstream).sum();
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let (t, c) = (rng.random_range(0..z.nrows()), rng.random_range(0..z.ncols()));
        let eps = 1e-5;
        let (mut a, mut b) = (z.clone(), z.clone());
        a[(t, c)] += eps;
        b[(t, c)] -= eps;
        worst = worst.max(rel_err(g[(t, c)], (loss(&a) - loss(&b)) / (2.0 * eps)));
    }
    worst
}

/// Finite-difference check of every term over a random sample of scalar
/// coordinates of a perturbed, overlapping two-person scene.
fn term_gradient_error(prior: &PriorBackend) -> Result<f64, String> {
    let scene = generate(&SceneConfig { people: 2, views: 3, frames: 8, swap_rate: 0.0, seed: 3, ..SceneConfig::default() })
        .map_err(|e| e.to_string())?;
    let mut vars = SceneVariables {
        people: scene
            .truth
            .people
            .iter()
            .map(|p| PersonVariables {
                track_id: p.track_id,
                first_frame: 0,
                beta: p.clip.beta,
                z: prior.encode(&p.clip.motion).unwrap().0,
                rotation: p.clip.rotation.clone(),
                translation: p.clip.translation.clone(),
            })
            .collect(),
        cameras: scene.truth.cameras_unknown.iter().map(|c| c.extrinsics).collect(),
        scale: 1.02,
    };
    let gap = vars.people[0].translation[0] - vars.people[1].translation[0] + Vector3::new(150.0, 0.0, 0.0);
    vars.people[1].translation.iter_mut().for_each(|t| *t += gap);
    vars.people[1].beta[2] = 0.4;
    let intrinsics = scene.truth.cameras.iter().map(|c| c.intrinsics).collect();
    let cfg = OptimizerConfig::default();
    let problem = Problem::new(&scene.template, prior, intrinsics, &vars, &scene.observations, &cfg).map_err(|e| e.to_string())?;
    let state = SceneState::from_variables(&vars);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for terms in [Terms::DATA, Terms::PRIOR, Terms::PENETRATION] {
        let e = problem.evaluate(&state, terms).map_err(|e| e.to_string())?;
        ensure(e.value() > 0.0, "a term vanishes in the test configuration")?;
        let g = &e.grad;
        let f = |s: &SceneState| problem.evaluate(s, terms).unwrap().value();
        let central = |eps: f64, step: &dyn Fn(&mut SceneState, f64)| {
            let (mut a, mut b) = (state.clone(), state.clone());
            step(&mut a, eps);
            step(&mut b, -eps);
            (f(&a) - f(&b)) / (2.0 * eps)
        };
        let dir = Vector3::new(0.3, -0.5, 0.8);
        for v in 1..3 {
            let an = g.cameras[v].rotation.component_mul(&(so3::skew(&dir) * state.cameras[v].rotation)).sum();
            let nu = central(1e-6, &|s, e| s.cameras[v].rotation = so3::exp(&(dir * e)) * s.cameras[v].rotation);
            worst = worst.max(rel_err(an, nu));
            let nu = central(1e-3, &|s, e| s.cameras[v].translation += dir * e);
            worst = worst.max(rel_err(g.cameras[v].translation.dot(&dir), nu));
        }
        worst = worst.max(rel_err(g.scale, central(1e-7, &|s, e| s.scale += e)));
        for _ in 0..6 {
            let n = rng.random_range(0..2);
            let t = rng.random_range(0..8);
            let an = g.people[n].rotations[t].component_mul(&(so3::skew(&dir) * state.people[n].rotations[t])).sum();
            let nu = central(1e-6, &|s, e| s.people[n].rotations[t] = so3::exp(&(dir * e)) * s.people[n].rotations[t]);
            worst = worst.max(rel_err(an, nu));
            let nu = central(1e-3, &|s, e| s.people[n].translations[t] += dir * e);
            worst = worst.max(rel_err(g.people[n].translations[t].dot(&dir), nu));
            let k = rng.random_range(0..10);
            worst = worst.max(rel_err(g.people[n].beta[k], central(1e-5, &|s, e| s.people[n].beta[k] += e)));
            let c = rng.random_range(0..state.people[n].z.ncols());
            worst = worst.max(rel_err(g.people[n].z[(t, c)], central(1e-5, &|s, e| s.people[n].z[(t, c)] += e)));
        }
    }
    Ok(worst)
}

fn prior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prior = builtin_prior();
    let PriorBackend::Linear(linear) = &prior else { return Err("built-in prior is not linear".into()) };
    let d = linear.latent_dim();

    let mut worst_affine = 0.0f64;
    for _ in 0..20 {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let z = DMatrix::from_fn(40, d, |t, c| a[c] + b[c] * t as f64);
        let (pen, _) = latent_linear_penalty(&z).map_err(|e| e.to_string())?;
        worst_affine = worst_affine.max(pen / z.norm_squared());
    }

    let z = DMatrix::from_fn(12, d, |_, _| rng.random_range(-1.0..1.0));
    let mut worst_decode = decode_gradient_error(&prior, &z, &mut rng);
    let gru = PriorBackend::Gru(Box::new(GruVae::random(GruArchitecture::with_sizes(16, 12, 2, 6), 4, 0.5)));
    let zg = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-1.0..1.0));
    worst_decode = worst_decode.max(decode_gradient_error(&gru, &zg, &mut rng));

    let worst_terms = term_gradient_error(&prior)?;

    // Independent principal subspace from the SVD of the centered data.
    let clips = motion_corpus(6, 120, 30.0, 99);
    let trained = train_linear_backend(&clips, 20).map_err(|e| e.to_string())?;
    let rows: Vec<f64> = clips.iter().flat_map(|c| c.as_slice().iter().copied()).collect();
    let x = DMatrix::from_row_slice(rows.len() / MOTION_DIM, MOTION_DIM, &rows);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(x.nrows(), MOTION_DIM, |r, c| x[(r, c)] - mean[c]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let basis = DMatrix::from_fn(MOTION_DIM, 20, |r, k| v_t[(order[k], r)]);
    let oracle = &centered * &basis * basis.transpose();
    let recon = trained.reconstruct_rows(&x);
    let mut worst_recon = 0.0f64;
    for r in 0..x.nrows() {
        for c in 0..MOTION_DIM {
            worst_recon = worst_recon.max((recon[(r, c)] - (oracle[(r, c)] + mean[c])).abs());
        }
    }

    let detail = format!(
        "affine penalty {worst_affine:.1e}, decode gradient {worst_decode:.1e}, term gradients {worst_terms:.1e}, reconstruction vs oracle {worst_recon:.1e}"
    );
    ensure(worst_affine < 1e-20 && worst_decode < 1e-4 && worst_terms < 1e-4 && worst_recon < 1e-8, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- joint optimization

fn joint() -> Outcome {
    let scene = generate(&SceneConfig::default()).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let prior = builtin_prior();
    let inputs = &scene.truth.cameras_unknown;
    let points: Vec<Point3> =
        scene.truth.people.iter().flat_map(|p| (0..200).step_by(10).flat_map(move |f| (0..24).map(move |j| p.joint(f, j)))).collect();
    let score = |cams: &[Camera]| -> Result<(f64, f64), String> {
        let est: Vec<Extrinsics> = cams.iter().map(|c| c.extrinsics).collect();
        let gt: Vec<Extrinsics> = scene.truth.cameras.iter().map(|c| c.extrinsics).collect();
        let al = rigid_align(&est, &gt, true).map_err(|e| e.to_string())?;
        let r = camera_errors(&al.aligned, &scene.truth.cameras, &points).map_err(|e| e.to_string())?;
        Ok((r.mean_pos_mm, r.mean_ang_deg))
    };
    let (init, _, _) = initialize_cameras(&scene.observations, inputs, &scene.template, &cfg).map_err(|e| e.to_string())?;
    let (pos0, ang0) = score(&init)?;
    let result = run(&scene.observations, inputs, &scene.template, &prior, &cfg).map_err(|e| e.to_string())?;
    let (pos1, ang1) = score(&result.cameras)?;
    let trace = result.report.optimizer.trace();
    let increases = trace.windows(2).filter(|w| w[1] > w[0]).count();
    let detail = format!(
        "position {pos0:.2} -> {pos1:.2} mm ({:.1}x), angle {ang0:.3} -> {ang1:.4} deg, {} trace steps, {increases} increases",
        pos0 / pos1,
        trace.len()
    );
    ensure(pos0 >= 5.0 * pos1 && ang1 < 0.5 && increases == 0 && !trace.is_empty(), detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- penetration

/// Default joints with one capsule from pelvis to spine1.
fn single_capsule_template(radius: f64) -> BodyTemplate {
    BodyTemplate { capsules: vec![CapsuleSpec { joint_a: 0, joint_b: 3, radius }], ..BodyTemplate::default() }
}

fn penetration() -> Outcome {
    let radius = 100.0;
    let template = single_capsule_template(radius);
    let clips = motion_corpus(4, 120, 30.0, 3);
    let prior = PriorBackend::Linear(train_linear_backend(&clips, MOTION_DIM).map_err(|e| e.to_string())?);
    let (z, _) = prior.encode(&MotionSequence::identity(3)).map_err(|e| e.to_string())?;
    // Both capsules share the rest pose, so a sideways shift perpendicular to
    // the segment gives parallel capsules at axis distance `dx`.
    let axis = Vector3::from(template.joints[3].offset).normalize();
    let side = axis.cross(&if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() }).normalize();
    let person = |id: usize, at: Vector3<f64>| PersonVariables {
        track_id: id,
        first_frame: 0,
        beta: [0.0; 10],
        z: z.clone(),
        rotation: vec![Vector3::zeros(); 3],
        translation: vec![at; 3],
    };
    let k = Intrinsics::new(1000.0, 1000.0, 960.0, 540.0, 0.0).unwrap();
    let cfg = OptimizerConfig::default();
    let pen = |depth: f64| -> Result<f64, String> {
        let vars = SceneVariables {
            people: vec![person(0, Vector3::zeros()), person(1, side * (2.0 * radius - depth))],
            cameras: vec![Extrinsics::from_center(&Matrix3::identity(), &Vector3::new(0.0, 0.0, -5000.0))],
            scale: 1.0,
        };
        let problem = Problem::new(&template, &prior, vec![k], &vars, &[], &cfg).map_err(|e| e.to_string())?;
        Ok(problem.evaluate(&SceneState::from_variables(&vars), Terms::PENETRATION).map_err(|e| e.to_string())?.terms.penetration)
    };
    let separated = [-1000.0, -100.0, -1.0].iter().map(|&d| pen(d)).collect::<Result<Vec<_>, _>>()?;
    let depths = [2.0, 10.0, 25.0, 50.0, 75.0, 100.0];
    let values = depths.iter().map(|&d| pen(d)).collect::<Result<Vec<_>, _>>()?;
    let at50 = values[3];
    let monotone = values.windows(2).all(|w| w[1] > w[0]);

    // Same checks on the full body: far apart is exactly zero, overlapping is positive.
    let full = BodyTemplate::default();
    let full_pen = |dx: f64| -> Result<f64, String> {
        let vars = SceneVariables {
            people: vec![person(0, Vector3::zeros()), person(1, Vector3::new(dx, 0.0, 0.0))],
            cameras: vec![Extrinsics::from_center(&Matrix3::identity(), &Vector3::new(0.0, 0.0, -5000.0))],
            scale: 1.0,
        };
        let problem = Problem::new(&full, &prior, vec![k], &vars, &[], &cfg).map_err(|e| e.to_string())?;
        Ok(problem.evaluate(&SceneState::from_variables(&vars), Terms::PENETRATION).map_err(|e| e.to_string())?.terms.penetration)
    };
    let (far, near) = (full_pen(2000.0)?, full_pen(100.0)?);

    let detail = format!(
        "separated {separated:?}, depth {depths:?} mm -> {}, full body apart {far} / overlapping {near:.3e}",
        values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
    );
    ensure(separated.iter().all(|&v| v == 0.0) && at50 > 0.0 && monotone && far == 0.0 && near > 0.0, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("scene");
    std::fs::create_dir_all(&data).map_err(|e| e.to_string())?;
    app::synth(&SceneConfig::default(), &data).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
        app::optimize(&data, &cfg, &out).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(out.join(app::RESULT_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], "result.json differs between runs")?;
    Ok(format!("result.json identical ({} bytes)", outputs[0].len()))
}

fn main() {
    let criteria = [
        Criterion { name: "geometry oracles", budget: Duration::from_secs(10), check: geometry },
        Criterion { name: "identity-error filtering", budget: Duration::from_secs(60), check: denoise },
        Criterion { name: "motion prior", budget: Duration::from_secs(30), check: prior },
        Criterion { name: "joint optimization", budget: Duration::from_secs(600), check: joint },
        Criterion { name: "penetration", budget: Duration::from_secs(60), check: penetration },
        Criterion { name: "determinism", budget: Duration::from_secs(600), check: determinism },
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.as_deref().is_none_or(|f| c.name.contains(f))) {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.budget => Err(format!("{d}; over the {:.0} s budget", c.budget.as_secs_f64())),
            other => other,
        };
        match outcome {
            Ok(d) => println!("PASS {} ({:.1} s): {d}", c.name, elapsed.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL {} ({:.1} s): {d}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
