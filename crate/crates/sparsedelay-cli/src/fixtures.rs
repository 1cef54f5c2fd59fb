//! Bundled fixtures: the worked seven-state example in both its original
//! and permuted CN assignments, and the thirty-node initial ordering used
//! by the large redesign experiment.

use sparsedelay::model::{PlantModel, Topology};
use sparsedelay::{Error, Matrix, Result};

/// A bundled fixture: a topology, optionally with a matching gain pattern.
pub struct Fixture {
    pub name: &'static str,
    pub description: &'static str,
    pub topology: Topology<f64>,
    pub gain: Option<Matrix>,
}

/// Sparsity pattern of the worked example: entries a..s valued 1..19.
pub fn example_gain() -> Matrix {
    let support: [&[usize]; 6] =
        [&[0, 3, 5, 6], &[1, 2, 4, 6], &[2, 3, 5], &[2, 3, 6], &[3, 4, 5], &[3, 5]];
    let mut k = Matrix::zeros(6, 7);
    let mut val = 1.0;
    for (i, cols) in support.iter().enumerate() {
        for &j in cols.iter() {
            k[(i, j)] = val;
            val += 1.0;
        }
    }
    k
}

fn example1_topology() -> Topology<f64> {
    Topology::new((0..7).collect(), (0..6).collect(), vec![1, 2, 1, 1, 1, 1], vec![1; 6])
        .expect("static fixture")
}

fn example2_topology() -> Topology<f64> {
    Topology::new(
        vec![1, 0, 4, 6, 2, 3, 5],
        vec![1, 0, 4, 3, 2, 5],
        vec![1, 1, 1, 1, 1, 2],
        vec![1; 6],
    )
    .expect("static fixture")
}

/// Initial 30-CN assignment orders of the large redesign experiment
/// (0-based here; the published lists are 1-based).
const CASEB_X_ORDER: [usize; 30] = [
    29, 19, 21, 0, 24, 17, 10, 23, 15, 1, 27, 25, 2, 4, 6, 3, 9, 11, 5, 20, 26, 8, 14, 18, 7, 16,
    22, 12, 28, 13,
];
const CASEB_U_ORDER: [usize; 30] = [
    25, 14, 23, 11, 8, 0, 12, 26, 7, 9, 21, 10, 4, 22, 15, 19, 5, 13, 18, 24, 6, 16, 3, 20, 17,
    1, 2, 28, 27, 29,
];

fn caseb_topology() -> Topology<f64> {
    Topology::new(CASEB_X_ORDER.to_vec(), CASEB_U_ORDER.to_vec(), vec![1; 30], vec![1; 30])
        .expect("static fixture")
}

pub fn fixture_names() -> &'static [&'static str] {
    &["example1", "example2", "caseb_init"]
}

pub fn fixture_loader(name: &str) -> Result<Fixture> {
    match name {
        "example1" => Ok(Fixture {
            name: "example1",
            description: "seven states, six inputs, natural CN order; 14 intra-layer links",
            topology: example1_topology(),
            gain: Some(example_gain()),
        }),
        "example2" => Ok(Fixture {
            name: "example2",
            description: "same gain under a permuted CN assignment; 9 intra-layer links",
            topology: example2_topology(),
            gain: Some(example_gain()),
        }),
        "caseb_init" => Ok(Fixture {
            name: "caseb_init",
            description: "thirty singleton CNs in the published initial order",
            topology: caseb_topology(),
            gain: None,
        }),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

pub fn fixture_topology(name: &str) -> Result<Topology<f64>> {
    Ok(fixture_loader(name)?.topology)
}

/// A stable plant sized for a named fixture's topology (identity weights;
/// the fixture gain patterns are about structure, not dynamics).
pub fn fixture_plant(name: &str) -> Result<PlantModel<f64>> {
    let topo = fixture_topology(name)?;
    let n = topo.n();
    let m = topo.m();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -1.0 - 0.05 * i as f64;
        if i + 1 < n {
            a[(i, i + 1)] = 0.2;
        }
    }
    let mut b = Matrix::zeros(n, m);
    for i in 0..n.min(m) {
        b[(i, i)] = 1.0;
    }
    PlantModel::new(a, b, Matrix::identity(n, n), Matrix::identity(n, n), Matrix::identity(m, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sparsedelay::netcost::channel_counts;

    #[test]
    fn example1_fixture_counts() {
        let f = fixture_loader("example1").unwrap();
        let counts = channel_counts(f.gain.as_ref().unwrap(), &f.topology).unwrap();
        assert_eq!(counts.n_off, vec![0, 2, 4, 2, 3, 3]);
        assert_eq!(counts.intra_links(), 14);
        assert_eq!(f.topology.n_sizes(), &[1, 2, 1, 1, 1, 1]);
    }

    #[test]
    fn example2_fixture_counts() {
        let f = fixture_loader("example2").unwrap();
        let counts = channel_counts(f.gain.as_ref().unwrap(), &f.topology).unwrap();
        assert_eq!(counts.n_off, vec![0, 0, 1, 2, 2, 4]);
        assert_eq!(counts.intra_links(), 9);
        // 1-based published order starts 2, 1, 5, 7, ...
        assert_eq!(&f.topology.x_order()[..4], &[1, 0, 4, 6]);
    }

    #[test]
    fn caseb_fixture_orders() {
        let f = fixture_loader("caseb_init").unwrap();
        assert_eq!(f.topology.n_cn(), 30);
        // published 1-based heads: X = (30, 20, 22, 1, 25, ...), U = (26, 15, 24, 12, 9, ...)
        let x1: Vec<usize> = f.topology.x_order().iter().map(|&i| i + 1).collect();
        assert_eq!(&x1[..5], &[30, 20, 22, 1, 25]);
        let u1: Vec<usize> = f.topology.u_order().iter().map(|&i| i + 1).collect();
        assert_eq!(&u1[..5], &[26, 15, 24, 12, 9]);
    }

    #[test]
    fn unknown_fixture_errors() {
        assert!(fixture_loader("nope").is_err());
    }
}
