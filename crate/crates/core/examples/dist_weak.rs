//! Distance between two particle configurations modulo relabeling and integer shifts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weakkam::*;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = ParticleArray::random_uniform(&mut rng, 5, 2);
    let b = ParticleArray::random_uniform(&mut rng, 5, 2);

    let relabeled = a
        .permuted(&Permutation::random(&mut rng, 5))
        .shifted(&IntegerShift::random(&mut rng, 5, 2, 3));

    println!("dist_weak(a, b)         = {:.6}", dist_weak(&a, &b)?);
    println!("dist_weak(a, a moved)   = {:.3e}", dist_weak(&a, &relabeled)?);
    println!("equivalent              = {}", is_equivalent(&a, &relabeled, 1e-12)?);
    println!("wrapped first particle  = {:?}", wrap(&relabeled)?.row(0));
    Ok(())
}
