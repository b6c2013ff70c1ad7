mod common;

use collapse_core::trainer::loss_and_grad;
use collapse_core::{build_ssem, solve_delta_star, supcl_loss, LossParams, SsemSpec};
use common::{brute_supcl, random_unit_set, shape_of};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn brute_force_agrees_with_loss_module() {
    let u = random_unit_set(3, 4, 2, 5, 11);
    let shape = shape_of(&u);
    for (tau, alpha) in [(0.1, 0.0), (0.5, 0.3), (2.0, 1.0)] {
        let params = LossParams::new(tau, alpha).unwrap();
        let fast = supcl_loss(&u, params).unwrap();
        let slow = brute_supcl(u.as_slice(), &shape, tau, alpha);
        assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-6;
    for draw in 0..5 {
        let tau = 0.1 + 0.9 * uniform(&mut rng);
        let alpha = uniform(&mut rng);
        let u = random_unit_set(3, 3, 2, 7, 100 + draw);
        let shape = shape_of(&u);
        let (_, grad) = loss_and_grad(&u, LossParams::new(tau, alpha).unwrap()).unwrap();
        let mut x = u.as_slice().to_vec();
        let mut worst: f64 = 0.0;
        for c in 0..x.len() {
            let orig = x[c];
            x[c] = orig + h;
            let up = brute_supcl(&x, &shape, tau, alpha);
            x[c] = orig - h;
            let down = brute_supcl(&x, &shape, tau, alpha);
            x[c] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (grad[c] - fd).abs() / fd.abs().max(grad[c].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "tau={tau} alpha={alpha}: relative error {worst:e}");
    }
}

#[test]
fn solved_ssem_is_first_order_stationary() {
    let (m, n, p) = (4, 3, 2);
    for &(tau, alpha) in &[(0.1, 0.5), (0.3, 0.8), (1.0, 0.95), (0.2, 1.0), (0.5, 0.1)] {
        let sol = solve_delta_star(m, n, tau, alpha).unwrap();
        let u = build_ssem(SsemSpec::new(m, n, p, sol.delta_star).unwrap(), m * n - 1).unwrap();
        let (_, grad) = loss_and_grad(&u, LossParams::new(tau, alpha).unwrap()).unwrap();
        let d = u.dim();
        for (row, g) in u.rows().zip(grad.chunks_exact(d)) {
            let radial: f64 = row.iter().zip(g).map(|(a, b)| a * b).sum();
            let tangential: f64 =
                g.iter().zip(row).map(|(gi, ri)| (gi - radial * ri).powi(2)).sum::<f64>().sqrt();
            assert!(tangential <= 1e-6, "tau={tau} alpha={alpha}: {tangential:e}");
        }
    }
}
