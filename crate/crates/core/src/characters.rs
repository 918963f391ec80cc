//! Dirichlet characters with exact values.
//!
//! `(Z/M)^*` is decomposed over the prime powers exactly dividing `M`. An odd
//! prime power contributes its smallest primitive root, `4` contributes `-1`,
//! and `2^k` with `k >= 3` contributes `-1` and `5`. Each generator is lifted
//! by CRT so that it is `1` at every other component. A character is a tuple
//! of exponents `e_j` with `chi(g_j) = exp(2 pi i e_j / d_j)`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::primes::{factorize, gcd, pow_mod};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Generator {
    /// Generator lifted to `Z/M`.
    pub value: u64,
    pub order: u64,
    /// The prime whose component this generator lives in.
    pub prime: u64,
}

/// Unit group of `Z/M` with a discrete-log table over all residues.
#[derive(Debug)]
pub struct UnitGroup {
    modulus: u64,
    generators: Vec<Generator>,
    /// `(p, k)` for every prime power exactly dividing `M`, ascending.
    components: Vec<(u64, u32)>,
    /// For each generator, the index into `components` it belongs to.
    component_of: Vec<usize>,
    /// `logs[n * r + j]` = discrete log of `n` in generator `j`, for units `n`.
    logs: Vec<u32>,
    is_unit: Vec<bool>,
    exponent: u64,
}

fn mod_inverse(a: u64, m: u64) -> u64 {
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    debug_assert_eq!(r, 1, "{a} not invertible mod {m}");
    t.rem_euclid(m as i128) as u64
}

/// `x` with `x = g (mod q)` and `x = 1 (mod M/q)`.
fn crt_lift(g: u64, q: u64, modulus: u64) -> u64 {
    let rest = modulus / q;
    if rest == 1 {
        return g % q;
    }
    let t = ((g + q - 1) % q) * mod_inverse(rest % q, q) % q;
    (1 + rest * t) % modulus
}

fn smallest_primitive_root(p: u64, q: u64, phi: u64) -> u64 {
    let prime_factors: Vec<u64> = factorize(phi).into_iter().map(|(f, _)| f).collect();
    (2..q)
        .find(|&g| gcd(g, p) == 1 && prime_factors.iter().all(|&f| pow_mod(g, phi / f, q) != 1))
        .expect("odd prime powers have primitive roots")
}

impl UnitGroup {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::ZeroModulus);
        }
        let components = factorize(modulus);
        let mut generators = Vec::new();
        let mut component_of = Vec::new();
        // per component: closure from residue mod q to the tuple of local logs
        let mut local_tables: Vec<(u64, usize, Vec<Vec<u32>>)> = Vec::new();
        for (ci, &(p, k)) in components.iter().enumerate() {
            let q = p.pow(k);
            if p == 2 {
                match k {
                    1 => {}
                    2 => {
                        generators.push(Generator {
                            value: crt_lift(3, 4, modulus),
                            order: 2,
                            prime: 2,
                        });
                        component_of.push(ci);
                        let mut table = vec![Vec::new(); 4];
                        table[1] = vec![0];
                        table[3] = vec![1];
                        local_tables.push((q, 1, table));
                    }
                    _ => {
                        let ord5 = q / 4;
                        generators.push(Generator {
                            value: crt_lift(q - 1, q, modulus),
                            order: 2,
                            prime: 2,
                        });
                        generators.push(Generator {
                            value: crt_lift(5, q, modulus),
                            order: ord5,
                            prime: 2,
                        });
                        component_of.extend([ci, ci]);
                        let mut table = vec![Vec::new(); q as usize];
                        let mut pow5 = 1u64;
                        for b in 0..ord5 {
                            table[pow5 as usize] = vec![0, b as u32];
                            table[(q - pow5) as usize] = vec![1, b as u32];
                            pow5 = pow5 * 5 % q;
                        }
                        local_tables.push((q, 2, table));
                    }
                }
            } else {
                let phi = q / p * (p - 1);
                let g = smallest_primitive_root(p, q, phi);
                generators.push(Generator {
                    value: crt_lift(g, q, modulus),
                    order: phi,
                    prime: p,
                });
                component_of.push(ci);
                let mut table = vec![Vec::new(); q as usize];
                let mut x = 1u64;
                for i in 0..phi {
                    table[x as usize] = vec![i as u32];
                    x = x * g % q;
                }
                local_tables.push((q, 1, table));
            }
        }
        let r = generators.len();
        let m = modulus as usize;
        let mut logs = vec![0u32; m * r];
        let mut is_unit = vec![false; m];
        for n in 0..modulus {
            if gcd(n, modulus) != 1 {
                continue;
            }
            is_unit[n as usize] = true;
            let mut j = 0;
            for (q, width, table) in &local_tables {
                let local = &table[(n % q) as usize];
                debug_assert_eq!(local.len(), *width);
                for &l in local {
                    logs[n as usize * r + j] = l;
                    j += 1;
                }
            }
        }
        let exponent = generators.iter().fold(1, |acc, g| acc / gcd(acc, g.order) * g.order);
        Ok(UnitGroup {
            modulus,
            generators,
            components,
            component_of,
            logs,
            is_unit,
            exponent,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn order(&self) -> u64 {
        self.generators.iter().map(|g| g.order).product()
    }

    /// Discrete logs of `n` w.r.t. each generator, or `None` off the units.
    pub fn logs(&self, n: i64) -> Option<&[u32]> {
        let r = self.generators.len();
        let idx = n.rem_euclid(self.modulus as i64) as usize;
        self.is_unit[idx].then(|| &self.logs[idx * r..(idx + 1) * r])
    }
}

/// `(generator, order)` pairs for `(Z/M)^*`, lifted to `Z/M`.
pub fn unit_group_generators(modulus: u64) -> Result<Vec<(u64, u64)>> {
    Ok(UnitGroup::new(modulus)?
        .generators
        .iter()
        .map(|g| (g.value, g.order))
        .collect())
}

/// An exact character value: zero or `exp(2 pi i num / den)` with `num/den` reduced, `0 <= num < den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CharValue {
    Zero,
    Root { num: u64, den: u64 },
}

impl CharValue {
    pub const ONE: CharValue = CharValue::Root { num: 0, den: 1 };

    pub fn root(num: u64, den: u64) -> Self {
        let num = num % den;
        let g = gcd(num, den);
        CharValue::Root {
            num: num / g,
            den: den / g,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self {
            CharValue::Zero => Complex64::new(0.0, 0.0),
            CharValue::Root { num, den } => {
                // exact values on the axes so real characters produce exact zeros
                match (4 * num) % den {
                    0 => match 4 * num / den {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, 1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, -1.0),
                    },
                    _ => Complex64::from_polar(1.0, std::f64::consts::TAU * num as f64 / den as f64),
                }
            }
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: CharValue) -> CharValue {
        match (self, other) {
            (CharValue::Root { num: a, den: b }, CharValue::Root { num: c, den: d }) => {
                let l = b / gcd(b, d) * d;
                CharValue::root(a * (l / b) + c * (l / d), l)
            }
            _ => CharValue::Zero,
        }
    }

    pub fn is_real(self) -> bool {
        match self {
            CharValue::Zero => true,
            CharValue::Root { den, .. } => den <= 2,
        }
    }
}

#[derive(Clone)]
pub struct DirichletCharacter {
    group: Arc<UnitGroup>,
    exponents: Vec<u64>,
    conductor: u64,
}

impl fmt::Debug for DirichletCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletCharacter")
            .field("modulus", &self.modulus())
            .field("exponents", &self.exponents)
            .field("conductor", &self.conductor)
            .finish()
    }
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.modulus() == other.modulus() && self.exponents == other.exponents
    }
}

impl Eq for DirichletCharacter {}

impl DirichletCharacter {
    /// Exponents are reduced modulo the generator orders.
    pub fn new(group: Arc<UnitGroup>, exponents: &[u64]) -> Result<Self> {
        if exponents.len() != group.generators.len() {
            return Err(Error::Length {
                expected: group.generators.len(),
                got: exponents.len(),
            });
        }
        let exponents: Vec<u64> = exponents
            .iter()
            .zip(&group.generators)
            .map(|(&e, g)| e % g.order)
            .collect();
        let conductor = component_conductor(&group, &exponents);
        Ok(DirichletCharacter {
            group,
            exponents,
            conductor,
        })
    }

    pub fn principal(modulus: u64) -> Result<Self> {
        let group = Arc::new(UnitGroup::new(modulus)?);
        let r = group.generators.len();
        Self::new(group, &vec![0; r])
    }

    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exponents
    }

    pub fn group(&self) -> &Arc<UnitGroup> {
        &self.group
    }

    pub fn conductor(&self) -> u64 {
        self.conductor
    }

    pub fn is_primitive(&self) -> bool {
        self.conductor == self.modulus()
    }

    pub fn is_principal(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    /// `chi^2` is principal.
    pub fn is_real(&self) -> bool {
        self.exponents
            .iter()
            .zip(&self.group.generators)
            .all(|(&e, g)| (2 * e) % g.order == 0)
    }

    pub fn evaluate(&self, n: i64) -> CharValue {
        let Some(logs) = self.group.logs(n) else {
            return CharValue::Zero;
        };
        let l = self.group.exponent;
        let num = logs
            .iter()
            .zip(&self.exponents)
            .zip(&self.group.generators)
            .fold(0u64, |acc, ((&lg, &e), g)| {
                (acc + (e * lg as u64 % g.order) * (l / g.order)) % l
            });
        CharValue::root(num, l)
    }

    pub fn evaluate_complex(&self, n: i64) -> Complex64 {
        self.evaluate(n).to_complex()
    }
}

/// Conductor from the exponents, one prime-power component at a time.
fn component_conductor(group: &UnitGroup, exponents: &[u64]) -> u64 {
    let mut conductor = 1u64;
    for (ci, &(p, k)) in group.components.iter().enumerate() {
        let local: Vec<(u64, u64)> = group
            .component_of
            .iter()
            .zip(exponents.iter().zip(&group.generators))
            .filter(|(&c, _)| c == ci)
            .map(|(_, (&e, g))| (e, g.order))
            .collect();
        let c = if p == 2 {
            match local.as_slice() {
                [] => 0,
                [(a, _)] => {
                    if *a == 0 {
                        0
                    } else {
                        2
                    }
                }
                [(a, _), (b, _)] => {
                    if *b == 0 {
                        if *a == 0 {
                            0
                        } else {
                            2
                        }
                    } else {
                        // trivial on 1 + 2^c Z iff 2^(k-c) | b, for c >= 3
                        (3..=k).find(|&c| b % 2u64.pow(k - c) == 0).unwrap_or(k)
                    }
                }
                _ => unreachable!("2-component has at most two generators"),
            }
        } else {
            let (e, _) = local[0];
            if e == 0 {
                0
            } else {
                // trivial on 1 + p^c Z iff p^(k-c) | e, for c >= 1
                (1..=k).find(|&c| e % p.pow(k - c) == 0).unwrap_or(k)
            }
        };
        conductor *= p.pow(c);
    }
    conductor
}

pub fn conductor_of(chi: &DirichletCharacter) -> u64 {
    chi.conductor()
}

pub fn is_primitive(chi: &DirichletCharacter) -> bool {
    chi.is_primitive()
}

/// Every character mod `M` in lexicographic exponent order.
pub fn characters_mod(modulus: u64) -> Result<Vec<DirichletCharacter>> {
    let group = Arc::new(UnitGroup::new(modulus)?);
    let orders: Vec<u64> = group.generators.iter().map(|g| g.order).collect();
    let mut out = Vec::with_capacity(group.order() as usize);
    let mut exps = vec![0u64; orders.len()];
    loop {
        out.push(DirichletCharacter::new(group.clone(), &exps)?);
        // odometer, last coordinate fastest
        let mut i = orders.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            exps[i] += 1;
            if exps[i] < orders[i] {
                break;
            }
            exps[i] = 0;
        }
    }
}

/// The first `count` primitive characters, ordered by conductor and then by
/// exponent tuple. Index 0 is the trivial character mod 1.
pub fn enumerate_primitive(count: usize) -> Vec<DirichletCharacter> {
    let mut out = Vec::with_capacity(count);
    let mut modulus = 1u64;
    while out.len() < count {
        let chars = characters_mod(modulus).expect("modulus >= 1");
        out.extend(chars.into_iter().filter(|c| c.is_primitive()).take(count - out.len()));
        modulus += 1;
    }
    out
}

/// CSV export: `index,modulus,conductor,exponents,is_real`; exponents are `;`-joined.
pub fn write_character_csv<W: Write>(writer: W, chars: &[DirichletCharacter]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "modulus", "conductor", "exponents", "is_real"])?;
    for (i, c) in chars.iter().enumerate() {
        let exps = c.exponents().iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            i.to_string(),
            c.modulus().to_string(),
            c.conductor().to_string(),
            exps,
            c.is_real().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
