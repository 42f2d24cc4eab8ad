//! Entrywise (Schur) products of positive-type kernels stay positive type.
//!
//! Builds random positive-semidefinite kernels from Gram matrices, forms their
//! entrywise product, and reports the minimum weighted eigenvalue of each.
//! A deliberately indefinite kernel is run last as a negative control to show
//! the witness actually detects failures.
//!
//! Run with `cargo run --release --example schur_positivity`.

use num_complex::Complex64;
use qeilab::kernels::{positivity_check, schur_product, KernelMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> KernelMatrix {
    let mut values = vec![Complex64::ZERO; n * n];
    for _ in 0..n / 2 + 1 {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        for a in 0..n {
            for b in 0..n {
                values[a * n + b] += v[a] * v[b].conj();
            }
        }
    }
    KernelMatrix::from_raw(n, values).expect("square by construction")
}

fn main() -> qeilab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("{:>4}  {:>12}  {:>12}  {:>12}  verdict", "pair", "min eig A", "min eig B", "min eig A.B");
    for i in 0..8 {
        let a = random_psd(&mut rng, 24);
        let b = random_psd(&mut rng, 24);
        let wa = positivity_check(&a)?;
        let wb = positivity_check(&b)?;
        let wp = positivity_check(&schur_product(&a, &b)?)?;
        println!(
            "{i:>4}  {:>12.3e}  {:>12.3e}  {:>12.3e}  {}",
            wa.min_eigenvalue,
            wb.min_eigenvalue,
            wp.min_eigenvalue,
            if wp.positive { "positive" } else { "FAILED" },
        );
    }

    // Negative control: an indefinite diagonal kernel must be flagged.
    let n = 24;
    let mut values = vec![Complex64::ZERO; n * n];
    for a in 0..n {
        values[a * n + a] = Complex64::new(if a == 0 { -1.0 } else { 1.0 }, 0.0);
    }
    let bad = KernelMatrix::from_raw(n, values)?;
    let witness = positivity_check(&bad)?;
    println!(
        "control: indefinite kernel min eig {:.3e} -> positive = {}",
        witness.min_eigenvalue, witness.positive
    );
    assert!(!witness.positive, "negative control must be detected");
    Ok(())
}
