//! Arithmetic in GF(2^8) with the reducing polynomial x^8+x^4+x^3+x^2+1
//! (0x11d) and generator 2.

const POLY: u16 = 0x11d;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const TABLES: Tables = build_tables();

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    // doubled so mul can skip the mod 255
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    TABLES.exp[TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize]
}

/// Multiplicative inverse. Panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    TABLES.exp[255 - TABLES.log[a as usize] as usize]
}

/// Row-major square matrix over GF(256).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    size: usize,
    cells: Vec<u8>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let size = rows.len();
        let mut cells = Vec::with_capacity(size * size);
        for r in rows {
            assert_eq!(r.len(), size, "matrix must be square");
            cells.extend_from_slice(r);
        }
        Matrix { size, cells }
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.size + c]
    }

    /// Gauss-Jordan inversion. Returns `None` for a singular matrix.
    pub fn invert(&self) -> Option<Matrix> {
        let n = self.size;
        let mut a = self.cells.clone();
        let mut out = vec![0u8; n * n];
        for i in 0..n {
            out[i * n + i] = 1;
        }
        for col in 0..n {
            let pivot = (col..n).find(|&r| a[r * n + col] != 0)?;
            if pivot != col {
                for c in 0..n {
                    a.swap(pivot * n + c, col * n + c);
                    out.swap(pivot * n + c, col * n + c);
                }
            }
            let scale = inv(a[col * n + col]);
            for c in 0..n {
                a[col * n + c] = mul(a[col * n + c], scale);
                out[col * n + c] = mul(out[col * n + c], scale);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0 {
                    continue;
                }
                for c in 0..n {
                    a[r * n + c] ^= mul(f, a[col * n + c]);
                    out[r * n + c] ^= mul(f, out[col * n + c]);
                }
            }
        }
        Some(Matrix { size: n, cells: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // carry-less multiply then reduce, independent of the log tables
    fn slow_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..8 {
            if b & (1 << i) != 0 {
                acc ^= (a as u16) << i;
            }
        }
        for bit in (8..16).rev() {
            if acc & (1 << bit) != 0 {
                acc ^= POLY << (bit - 8);
            }
        }
        acc as u8
    }

    #[test]
    fn table_mul_matches_carryless_reference() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a)), 1);
        }
    }

    #[test]
    fn invert_round_trips() {
        let m = Matrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 10]]);
        let inv_m = m.invert().expect("non-singular");
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0u8;
                for k in 0..3 {
                    s = add(s, mul(m.get(i, k), inv_m.get(k, j)));
                }
                assert_eq!(s, u8::from(i == j));
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = Matrix::from_rows(&[vec![1, 2], vec![1, 2]]);
        assert!(m.invert().is_none());
    }
}
