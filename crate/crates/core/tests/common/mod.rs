#![allow(dead_code, clippy::needless_range_loop)]

use locality::autodiff::{Tape, Tensor, Var};
use locality::data::{LabeledImage, PIXELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero and pairwise distinct, so relu and max
/// pooling stay differentiable under small perturbations.
pub fn away_from_kinks(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| 0.05 + i as f64 * 0.01).collect();
    for v in &mut values {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    for i in (1..n).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), values).unwrap()
}

/// Largest elementwise relative error between the tape gradient of every
/// leaf and central differences with step `h`.
pub fn gradcheck<F>(leaves: &[Tensor<f64>], h: f64, build: F) -> f64
where
    F: for<'a> Fn(&mut Tape<'a, f64>, &[Var]) -> Var,
{
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.scalar(loss)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(vars[li]).expect("leaf gradient").to_vec();
        for i in 0..leaf.len() {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[i] += h;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    worst
}

pub fn image(seed: u64, class: u8) -> LabeledImage {
    let mut r = rng(seed);
    LabeledImage::new((0..PIXELS).map(|_| r.random::<f32>()).collect(), class)
}

/// Images whose class is readable from their colour: class `c` has a
/// brighter red channel for larger `c`, plus noise.
pub fn separable_images(n: usize, seed: u64, classes: u8) -> Vec<LabeledImage> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let class = (i % classes as usize) as u8;
            let level = (class as f32 + 0.5) / classes as f32;
            let mut px = vec![0.0f32; PIXELS];
            for (p, v) in px.iter_mut().enumerate() {
                let base = if p < PIXELS / 3 { level } else { 0.5 };
                *v = (base + r.random_range(-0.1..0.1f32)).clamp(0.0, 1.0);
            }
            LabeledImage::new(px, class)
        })
        .collect()
}

use locality::scramble::{build_permutation, PermutationMap, ScrambleSpec, Scheme};

/// Random valid spec with side `2^(level..=6)`.
pub fn random_spec(r: &mut impl Rng) -> ScrambleSpec {
    let scheme = [Scheme::Identity, Scheme::TopDown, Scheme::BottomUp, Scheme::Full][r.random_range(0..4)];
    let level = match scheme {
        Scheme::Identity => 0,
        Scheme::Full => 5,
        _ => r.random_range(1..=4u8),
    };
    let min_log = u32::from(level).max(1);
    let side = 1usize << r.random_range(min_log..=6);
    ScrambleSpec::new(scheme, level, side, r.random()).unwrap()
}

/// Independent checks of one scrambling map against its spec, using an
/// image of `side²` pixels per channel.
pub fn check_scramble(spec: &ScrambleSpec, image: &[f32]) -> Result<(), String> {
    let map = build_permutation(spec).map_err(|e| e.to_string())?;
    let side = spec.image_side;
    let n = side * side;
    let fwd = map.forward();
    // Bijectivity, by counting.
    let mut hits = vec![0u8; n];
    for &q in fwd {
        hits[q as usize] += 1;
    }
    if hits.iter().any(|&h| h != 1) {
        return Err("not a bijection".into());
    }
    // Determinism: a second build serializes identically.
    let again = build_permutation(spec).unwrap();
    if again.to_bytes() != map.to_bytes() {
        return Err("rebuild differs".into());
    }
    if PermutationMap::from_bytes(&map.to_bytes()).unwrap() != map {
        return Err("serialization round trip".into());
    }
    // Channel means, each summed in its own index order, agree exactly.
    let out = map.apply(image).map_err(|e| e.to_string())?;
    let mean = |v: &[f32]| v.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
    for c in 0..image.len() / n {
        if mean(&image[c * n..(c + 1) * n]) != mean(&out[c * n..(c + 1) * n]) {
            return Err(format!("channel {c} mean changed"));
        }
    }
    let total = side.trailing_zeros();
    let level = u32::from(spec.level).min(total);
    match spec.scheme {
        Scheme::Identity => {
            if !map.is_identity() {
                return Err("identity spec moved pixels".into());
            }
        }
        Scheme::TopDown => {
            // Blocks of side side/2^level move rigidly.
            let b = side >> level;
            for p in 0..n {
                let (y, x) = (p / side, p % side);
                let q = fwd[p] as usize;
                let (qy, qx) = (q / side, q % side);
                if qy % b != y % b || qx % b != x % b {
                    return Err(format!("td offset broken at {p}"));
                }
                let anchor = fwd[(y - y % b) * side + (x - x % b)] as usize;
                if (anchor / side) / b != qy / b || (anchor % side) / b != qx / b {
                    return Err(format!("td block split at {p}"));
                }
            }
        }
        Scheme::BottomUp => {
            // Every 2^level block maps onto itself, so coarse means stay.
            let b = 1usize << level;
            for p in 0..n {
                let q = fwd[p] as usize;
                if (p / side) / b != (q / side) / b || (p % side) / b != (q % side) / b {
                    return Err(format!("bu pixel left its block at {p}"));
                }
            }
            for by in (0..side).step_by(b) {
                for bx in (0..side).step_by(b) {
                    let block_sum = |img: &[f32]| {
                        (0..b * b).map(|i| f64::from(img[(by + i / b) * side + bx + i % b])).sum::<f64>()
                    };
                    if block_sum(image) != block_sum(&out) {
                        return Err(format!("bu coarse mean changed at ({by}, {bx})"));
                    }
                }
            }
        }
        Scheme::Full => {}
    }
    Ok(())
}

/// At side 16 the last top-down and bottom-up levels cover every depth,
/// so TD4 and BU4 must coincide; at side 32 both chains end in S5.
pub fn check_endpoints(seed: u64) -> Result<(), String> {
    let td = build_permutation(&ScrambleSpec::new(Scheme::TopDown, 4, 16, seed).unwrap()).unwrap();
    let bu = build_permutation(&ScrambleSpec::new(Scheme::BottomUp, 4, 16, seed).unwrap()).unwrap();
    if td != bu {
        return Err("side-16 chain endpoints differ".into());
    }
    let td3 = build_permutation(&ScrambleSpec::new(Scheme::TopDown, 3, 16, seed).unwrap()).unwrap();
    if td3 == td {
        return Err("level 3 already equals the endpoint".into());
    }
    Ok(())
}
