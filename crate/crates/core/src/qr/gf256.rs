//! GF(256) arithmetic and Reed–Solomon coding over the field generated by
//! x⁸+x⁴+x³+x²+1 (0x11D) with generator element 2.

use std::sync::OnceLock;

/// Log/antilog tables for the field. Built once, shared immutably.
pub struct Gf256 {
    log: [u8; 256],
    exp: [u8; 512],
}

impl Gf256 {
    fn build() -> Self {
        let mut log = [0u8; 256];
        let mut exp = [0u8; 512];
        let mut x: u16 = 1;
        for i in 0..255 {
            exp[i] = x as u8;
            exp[i + 255] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= 0x11D;
            }
        }
        // log[0] is undefined; keep 0 and never index it via mul/inv.
        Self { log, exp }
    }

    /// α^i (i may exceed 254; the table wraps at period 255).
    #[inline]
    pub fn alpha_pow(&self, i: usize) -> u8 {
        self.exp[i % 255]
    }

    #[inline]
    pub fn log(&self, a: u8) -> u8 {
        debug_assert!(a != 0, "log(0) undefined");
        self.log[a as usize]
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    #[inline]
    pub fn inv(&self, a: u8) -> u8 {
        debug_assert!(a != 0, "inverse of 0 undefined");
        self.exp[255 - self.log[a as usize] as usize]
    }

    pub fn pow(&self, a: u8, e: usize) -> u8 {
        if a == 0 {
            return if e == 0 { 1 } else { 0 };
        }
        let l = self.log[a as usize] as usize * e;
        self.exp[l % 255]
    }

    /// Evaluate a polynomial with descending coefficients (first element is
    /// the highest power) at `x`, by Horner's method.
    pub fn poly_eval(&self, poly: &[u8], x: u8) -> u8 {
        let mut acc = 0u8;
        for &c in poly {
            acc = self.mul(acc, x) ^ c;
        }
        acc
    }
}

/// The shared field instance.
pub fn field() -> &'static Gf256 {
    static FIELD: OnceLock<Gf256> = OnceLock::new();
    FIELD.get_or_init(Gf256::build)
}

/// Monic generator polynomial ∏(x − α^i) for i in 0..n_ec, descending
/// coefficients.
pub fn generator_poly(n_ec: usize) -> Vec<u8> {
    let f = field();
    // ascending representation while building
    let mut poly = vec![1u8];
    for i in 0..n_ec {
        let a = f.alpha_pow(i);
        let mut next = vec![0u8; poly.len() + 1];
        for (j, &c) in poly.iter().enumerate() {
            next[j + 1] ^= c; // times x
            next[j] ^= f.mul(c, a); // times α^i
        }
        poly = next;
    }
    poly.reverse();
    poly
}

/// Compute `n_ec` Reed–Solomon parity bytes for `data` (polynomial
/// remainder modulo the generator).
pub fn rs_encode(data: &[u8], n_ec: usize) -> Vec<u8> {
    let f = field();
    let gen = generator_poly(n_ec);
    let mut rem = vec![0u8; n_ec];
    for &d in data {
        let factor = d ^ rem[0];
        rem.rotate_left(1);
        rem[n_ec - 1] = 0;
        if factor != 0 {
            for (r, &g) in rem.iter_mut().zip(&gen[1..]) {
                *r ^= f.mul(g, factor);
            }
        }
    }
    rem
}

#[derive(Debug, PartialEq, Eq)]
pub enum RsDecodeError {
    /// More errors than floor(n_ec/2), or an inconsistent locator.
    Uncorrectable,
}

/// Correct up to floor(n_ec/2) byte errors in `codeword` (data ‖ parity).
/// Returns the corrected data bytes and the number of corrections made.
pub fn rs_decode(codeword: &[u8], n_ec: usize) -> Result<(Vec<u8>, usize), RsDecodeError> {
    assert!(n_ec >= 2, "at least two parity bytes required");
    assert!(codeword.len() > n_ec && codeword.len() <= 255);
    let f = field();
    let n = codeword.len();

    let syndromes: Vec<u8> = (0..n_ec)
        .map(|i| f.poly_eval(codeword, f.alpha_pow(i)))
        .collect();
    if syndromes.iter().all(|&s| s == 0) {
        return Ok((codeword[..n - n_ec].to_vec(), 0));
    }

    let (lambda, deg) = berlekamp_massey(&syndromes);
    if deg == 0 || deg > n_ec / 2 {
        return Err(RsDecodeError::Uncorrectable);
    }

    // Chien search: position p has an error iff Λ(X_p⁻¹) = 0 with
    // X_p = α^(n−1−p).
    let mut positions = Vec::new();
    for p in 0..n {
        let x_inv = f.inv(f.alpha_pow(n - 1 - p));
        if eval_ascending(&lambda, x_inv) == 0 {
            positions.push(p);
        }
    }
    if positions.len() != deg {
        return Err(RsDecodeError::Uncorrectable);
    }

    // Forney: Ω(x) = S(x)·Λ(x) mod x^n_ec, Y_p = X_p·Ω(X_p⁻¹)/Λ′(X_p⁻¹).
    let mut omega = vec![0u8; n_ec];
    for (i, &s) in syndromes.iter().enumerate() {
        for (j, &l) in lambda.iter().enumerate() {
            if i + j < n_ec {
                omega[i + j] ^= f.mul(s, l);
            }
        }
    }
    // formal derivative over GF(2): odd-degree terms shift down
    let lambda_prime: Vec<u8> = lambda
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| if j % 2 == 1 { c } else { 0 })
        .collect();

    let mut corrected = codeword.to_vec();
    for &p in &positions {
        let x = f.alpha_pow(n - 1 - p);
        let x_inv = f.inv(x);
        let denom = eval_ascending(&lambda_prime, x_inv);
        if denom == 0 {
            return Err(RsDecodeError::Uncorrectable);
        }
        let magnitude = f.mul(f.mul(x, eval_ascending(&omega, x_inv)), f.inv(denom));
        corrected[p] ^= magnitude;
    }

    let clean = (0..n_ec).all(|i| f.poly_eval(&corrected, f.alpha_pow(i)) == 0);
    if !clean {
        return Err(RsDecodeError::Uncorrectable);
    }
    Ok((corrected[..n - n_ec].to_vec(), positions.len()))
}

/// Evaluate a polynomial with ascending coefficients at `x`.
fn eval_ascending(poly: &[u8], x: u8) -> u8 {
    let f = field();
    let mut acc = 0u8;
    for &c in poly.iter().rev() {
        acc = f.mul(acc, x) ^ c;
    }
    acc
}

/// Berlekamp–Massey: error locator Λ(x) (ascending coefficients, Λ(0)=1)
/// and its degree.
fn berlekamp_massey(syndromes: &[u8]) -> (Vec<u8>, usize) {
    let f = field();
    let mut lambda = vec![0u8; syndromes.len() + 1];
    lambda[0] = 1;
    let mut prev = lambda.clone();
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b = 1u8;

    for n in 0..syndromes.len() {
        let mut delta = syndromes[n];
        for j in 1..=l {
            delta ^= f.mul(lambda[j], syndromes[n - j]);
        }
        if delta == 0 {
            m += 1;
        } else if 2 * l <= n {
            let snapshot = lambda.clone();
            let coef = f.mul(delta, f.inv(b));
            for j in 0..lambda.len() - m {
                if prev[j] != 0 {
                    lambda[j + m] ^= f.mul(coef, prev[j]);
                }
            }
            prev = snapshot;
            l = n + 1 - l;
            b = delta;
            m = 1;
        } else {
            let coef = f.mul(delta, f.inv(b));
            for j in 0..lambda.len() - m {
                if prev[j] != 0 {
                    lambda[j + m] ^= f.mul(coef, prev[j]);
                }
            }
            m += 1;
        }
    }
    (lambda, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tables_mutually_inverse() {
        let f = field();
        for x in 1..=255u8 {
            assert_eq!(f.alpha_pow(f.log(x) as usize), x);
        }
        // antilog period 255
        for i in 0..255 {
            assert_eq!(f.alpha_pow(i), f.alpha_pow(i + 255));
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        let f = field();
        for x in 1..=255u8 {
            assert_eq!(f.mul(x, f.inv(x)), 1, "x = {x}");
        }
    }

    #[test]
    fn multiplication_associative_commutative_sampled() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let (a, b, c) = (rng.gen::<u8>(), rng.gen::<u8>(), rng.gen::<u8>());
            assert_eq!(f.mul(a, b), f.mul(b, a));
            assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
            // distributivity over XOR
            assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
        }
    }

    #[test]
    fn generator_poly_degree_seven_known_exponents() {
        // g(x) for 7 parity bytes, coefficients as α exponents
        // (x⁷ term first): 0, 87, 229, 146, 149, 238, 102, 21.
        let f = field();
        let gen = generator_poly(7);
        let expected: Vec<u8> = [0usize, 87, 229, 146, 149, 238, 102, 21]
            .iter()
            .map(|&e| f.alpha_pow(e))
            .collect();
        assert_eq!(gen, expected);
    }

    #[test]
    fn encoded_codeword_has_zero_syndromes() {
        let f = field();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let data: Vec<u8> = (0..20).map(|_| rng.gen()).collect();
            let n_ec = 10;
            let mut cw = data.clone();
            cw.extend(rs_encode(&data, n_ec));
            for i in 0..n_ec {
                assert_eq!(f.poly_eval(&cw, f.alpha_pow(i)), 0);
            }
        }
    }

    #[test]
    fn zero_codeword_decodes_with_zero_corrections() {
        let cw = vec![0u8; 26];
        let (data, corrections) = rs_decode(&cw, 7).unwrap();
        assert_eq!(corrections, 0);
        assert!(data.iter().all(|&b| b == 0));
    }

    #[test]
    fn corrects_up_to_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..1000 {
            let n_ec = [10usize, 16, 18, 22, 26][trial % 5];
            let data_len = 1 + (trial % 30);
            let data: Vec<u8> = (0..data_len).map(|_| rng.gen()).collect();
            let mut cw = data.clone();
            cw.extend(rs_encode(&data, n_ec));

            let n_errors = rng.gen_range(0..=n_ec / 2);
            let mut corrupted = cw.clone();
            let mut positions: Vec<usize> = (0..cw.len()).collect();
            for k in 0..n_errors {
                let pick = rng.gen_range(k..positions.len());
                positions.swap(k, pick);
                let delta = rng.gen_range(1..=255) as u8;
                corrupted[positions[k]] ^= delta;
            }

            let (decoded, corrections) = rs_decode(&corrupted, n_ec)
                .unwrap_or_else(|_| panic!("trial {trial}: {n_errors} errors uncorrected"));
            assert_eq!(decoded, data, "trial {trial}");
            assert_eq!(corrections, n_errors, "trial {trial}");
        }
    }

    #[test]
    fn beyond_capacity_rarely_miscorrects_silently() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut silent = 0usize;
        let trials = 500;
        for _ in 0..trials {
            let n_ec = 16usize;
            let data: Vec<u8> = (0..24).map(|_| rng.gen()).collect();
            let mut cw = data.clone();
            cw.extend(rs_encode(&data, n_ec));
            let mut corrupted = cw.clone();
            let mut positions: Vec<usize> = (0..cw.len()).collect();
            for k in 0..(n_ec / 2 + 1) {
                let pick = rng.gen_range(k..positions.len());
                positions.swap(k, pick);
                corrupted[positions[k]] ^= rng.gen_range(1..=255) as u8;
            }
            if let Ok((decoded, _)) = rs_decode(&corrupted, n_ec) {
                if decoded != data {
                    silent += 1;
                }
            }
        }
        assert!(
            silent * 100 <= trials,
            "{silent}/{trials} silent miscorrections"
        );
    }
}
