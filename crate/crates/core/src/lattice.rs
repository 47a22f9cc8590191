//! Finite honeycomb lattices and Ammann-Beenker quasicrystal patches.
//!
//! Sites carry cell indices and Cartesian positions; bonds are stored as
//! directed pairs with an orientation sign `nu`, a geometric angle, and a
//! periodic wrap count. Reversing a bond flips `nu` and shifts the angle by
//! pi, which is what the model assembly relies on for Hermiticity.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lattice vector a1 (lattice constant 1).
pub const A1: [f64; 2] = [1.0, 0.0];
/// Lattice vector a2.
pub const A2: [f64; 2] = [0.5, 0.866_025_403_784_438_6];
/// Offset of the B sublattice site within a cell, (a1 + a2) / 3.
pub const B_OFFSET: [f64; 2] = [0.5, 0.288_675_134_594_812_9];

/// Position dedup tolerance for quasicrystal patches.
pub const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Honeycomb,
    AmmannBeenker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondKind {
    Nn,
    Nnn,
}

/// Construction request for either lattice family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    #[serde(default)]
    pub l1: usize,
    #[serde(default)]
    pub l2: usize,
    #[serde(default)]
    pub inflation_steps: usize,
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn honeycomb(l1: usize, l2: usize, boundary: Boundary) -> Self {
        LatticeSpec { kind: LatticeKind::Honeycomb, l1, l2, inflation_steps: 0, boundary }
    }

    pub fn ammann_beenker(inflation_steps: usize) -> Self {
        LatticeSpec {
            kind: LatticeKind::AmmannBeenker,
            l1: 0,
            l2: 0,
            inflation_steps,
            boundary: Boundary::Dirichlet,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Site {
    pub index: usize,
    /// Cell indices (m, n); absent for quasicrystal vertices.
    pub cell: Option<[usize; 2]>,
    pub sublattice: Option<Sublattice>,
    /// Cartesian position, lattice constant 1.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bond {
    pub from: usize,
    pub to: usize,
    pub kind: BondKind,
    /// Orientation sign; flips under bond reversal.
    pub nu: i8,
    /// Angle of the geometric displacement, in [0, 2*pi).
    pub angle: f64,
    /// Number of times the bond crosses each periodic boundary.
    pub wrap: [i32; 2],
}

#[derive(Debug, Clone)]
pub struct Lattice {
    pub kind: LatticeKind,
    pub boundary: Boundary,
    /// Cell counts along a1 and a2; zero for quasicrystal patches.
    pub l1: usize,
    pub l2: usize,
    pub sites: Vec<Site>,
    pub bonds: Vec<Bond>,
}

impl Lattice {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_cells(&self) -> usize {
        self.l1 * self.l2
    }

    pub fn is_honeycomb(&self) -> bool {
        self.kind == LatticeKind::Honeycomb
    }

    /// Global site index of the honeycomb site at cell (m, n) on sublattice s.
    pub fn site_index(&self, m: usize, n: usize, s: Sublattice) -> usize {
        debug_assert!(self.is_honeycomb());
        2 * (m * self.l2 + n) + (s == Sublattice::B) as usize
    }

    /// Cell index in row-major (m, n) order.
    pub fn cell_index(&self, m: usize, n: usize) -> usize {
        m * self.l2 + n
    }

    pub fn bonds_of_kind(&self, kind: BondKind) -> impl Iterator<Item = &Bond> {
        self.bonds.iter().filter(move |b| b.kind == kind)
    }

    /// JSON export with one array of sites and one of bonds.
    pub fn to_json(&self) -> serde_json::Value {
        let sites: Vec<_> = self
            .sites
            .iter()
            .map(|s| {
                serde_json::json!({
                    "index": s.index,
                    "m": s.cell.map(|c| c[0]),
                    "n": s.cell.map(|c| c[1]),
                    "sublattice": s.sublattice,
                    "x": s.position[0],
                    "y": s.position[1],
                })
            })
            .collect();
        let bonds: Vec<_> = self
            .bonds
            .iter()
            .map(|b| {
                serde_json::json!({
                    "from": b.from,
                    "to": b.to,
                    "kind": b.kind,
                    "nu": b.nu,
                    "angle": b.angle,
                    "wrap": b.wrap,
                })
            })
            .collect();
        serde_json::json!({ "kind": self.kind, "boundary": self.boundary,
            "l1": self.l1, "l2": self.l2, "sites": sites, "bonds": bonds })
    }
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] * s, a[1] * s]
}

fn cross_z(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Angle of `v` normalized to [0, 2*pi).
pub fn bond_angle(v: [f64; 2]) -> f64 {
    let a = v[1].atan2(v[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn sublattice_offset(s: Sublattice) -> [f64; 2] {
    match s {
        Sublattice::A => [0.0, 0.0],
        Sublattice::B => B_OFFSET,
    }
}

/// Orientation sign used on all bonds: +1 when the displacement points into
/// the upper half plane. Nearest-neighbor hops only need the reversal
/// antisymmetry; next-nearest hops get the two-step convention below instead.
fn half_plane_sign(angle: f64) -> i8 {
    if angle < PI {
        1
    } else {
        -1
    }
}

/// Cell displacement table of nearest-neighbor hops leaving sublattice `s`.
fn nn_deltas(s: Sublattice) -> [([i32; 2], Sublattice); 3] {
    match s {
        Sublattice::A => {
            [([0, 0], Sublattice::B), ([-1, 0], Sublattice::B), ([0, -1], Sublattice::B)]
        }
        Sublattice::B => {
            [([0, 0], Sublattice::A), ([1, 0], Sublattice::A), ([0, 1], Sublattice::A)]
        }
    }
}

const NNN_DELTAS: [[i32; 2]; 6] = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1]];

fn geometric_displacement(from_s: Sublattice, to_s: Sublattice, delta: [i32; 2]) -> [f64; 2] {
    let cell = add(scale(A1, delta[0] as f64), scale(A2, delta[1] as f64));
    add(cell, sub(sublattice_offset(to_s), sublattice_offset(from_s)))
}

/// Haldane orientation sign for the next-nearest hop `delta` leaving
/// sublattice `s`: the hop decomposes uniquely into two nearest-neighbor
/// steps d1 then d2, and nu is the sign of (d1 x d2)_z.
fn nnn_orientation(s: Sublattice, delta: [i32; 2]) -> i8 {
    let target = geometric_displacement(s, s, delta);
    for (d1_cell, mid_s) in nn_deltas(s) {
        let d1 = geometric_displacement(s, mid_s, d1_cell);
        for (d2_cell, end_s) in nn_deltas(mid_s) {
            if end_s != s {
                continue;
            }
            let d2 = geometric_displacement(mid_s, end_s, d2_cell);
            if norm(sub(add(d1, d2), target)) < 1e-9 {
                let c = cross_z(d1, d2);
                return if c > 0.0 { 1 } else { -1 };
            }
        }
    }
    unreachable!("every honeycomb NNN displacement has a two-step decomposition");
}

/// Wrap a target cell coordinate into [0, l), returning the wrapped
/// coordinate and the crossing count.
fn wrap_coord(raw: i64, l: usize) -> (usize, i32) {
    let l = l as i64;
    let w = raw.div_euclid(l);
    ((raw.rem_euclid(l)) as usize, w as i32)
}

/// Honeycomb builder without the public size guard; ribbon construction
/// uses l2 = 1, where multi-edges between the same site pair (distinct
/// wraps) are intended.
pub(crate) fn honeycomb_lattice(l1: usize, l2: usize, boundary: Boundary) -> Lattice {
    let mut sites = Vec::with_capacity(2 * l1 * l2);
    for m in 0..l1 {
        for n in 0..l2 {
            for s in [Sublattice::A, Sublattice::B] {
                let base = add(scale(A1, m as f64), scale(A2, n as f64));
                sites.push(Site {
                    index: sites.len(),
                    cell: Some([m, n]),
                    sublattice: Some(s),
                    position: add(base, sublattice_offset(s)),
                });
            }
        }
    }

    let lat_stub = Lattice { kind: LatticeKind::Honeycomb, boundary, l1, l2, sites, bonds: vec![] };

    let mut bonds = Vec::new();
    let mut push_bond = |from: usize, m: usize, n: usize, s: Sublattice, delta: [i32; 2],
                         to_s: Sublattice, kind: BondKind| {
        let (tm, w1) = wrap_coord(m as i64 + delta[0] as i64, l1);
        let (tn, w2) = wrap_coord(n as i64 + delta[1] as i64, l2);
        if boundary == Boundary::Dirichlet && (w1 != 0 || w2 != 0) {
            return;
        }
        let to = lat_stub.site_index(tm, tn, to_s);
        let g = geometric_displacement(s, to_s, delta);
        let angle = bond_angle(g);
        let nu = match kind {
            BondKind::Nn => half_plane_sign(angle),
            BondKind::Nnn => nnn_orientation(s, delta),
        };
        bonds.push(Bond { from, to, kind, nu, angle, wrap: [w1, w2] });
    };

    for m in 0..l1 {
        for n in 0..l2 {
            for s in [Sublattice::A, Sublattice::B] {
                let from = lat_stub.site_index(m, n, s);
                for (delta, to_s) in nn_deltas(s) {
                    push_bond(from, m, n, s, delta, to_s, BondKind::Nn);
                }
                for delta in NNN_DELTAS {
                    push_bond(from, m, n, s, delta, s, BondKind::Nnn);
                }
            }
        }
    }

    Lattice { bonds, ..lat_stub }
}

/// Build a finite honeycomb lattice with A/B sublattices, nearest and
/// next-nearest directed bonds.
pub fn build_honeycomb(spec: &LatticeSpec) -> Result<Lattice> {
    if spec.kind != LatticeKind::Honeycomb {
        return Err(Error::InvalidInput("build_honeycomb requires a honeycomb spec".into()));
    }
    if spec.l1 < 2 || spec.l2 < 2 {
        return Err(Error::InvalidInput(format!(
            "honeycomb cell counts must be at least 2, got {} x {}",
            spec.l1, spec.l2
        )));
    }
    Ok(honeycomb_lattice(spec.l1, spec.l2, spec.boundary))
}

/// Site permutation realizing the translation by `v` cells on a periodic
/// honeycomb lattice. Entry `i` is the index of the translated site.
pub fn translation_map(lattice: &Lattice, v: (i32, i32)) -> Result<Vec<usize>> {
    if !lattice.is_honeycomb() || lattice.boundary != Boundary::Periodic {
        return Err(Error::InvalidInput(
            "translation_map requires a periodic honeycomb lattice".into(),
        ));
    }
    let mut perm = vec![0usize; lattice.n_sites()];
    for site in &lattice.sites {
        let [m, n] = site.cell.expect("honeycomb sites carry cells");
        let (tm, _) = wrap_coord(m as i64 + v.0 as i64, lattice.l1);
        let (tn, _) = wrap_coord(n as i64 + v.1 as i64, lattice.l2);
        perm[site.index] = lattice.site_index(tm, tn, site.sublattice.unwrap());
    }
    Ok(perm)
}

// ---------------------------------------------------------------------------
// Ammann-Beenker substitution tiling
// ---------------------------------------------------------------------------

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Half-square triangles in the two mirror chiralities plus the 45-degree
/// rhomb. Triangles store [acute, right-angle, acute] corners; the
/// hypotenuse is a square diagonal, not a tile edge.
#[derive(Debug, Clone)]
enum Tile {
    TriL([[f64; 2]; 3]),
    TriR([[f64; 2]; 3]),
    Rhomb([[f64; 2]; 4]),
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    add(a, scale(sub(b, a), t))
}

impl Tile {
    /// One inflation step: subdivide into tiles with edges shorter by the
    /// silver ratio 1 + sqrt(2).
    fn subdivide(&self, out: &mut Vec<Tile>) {
        let leg_t = 2.0 - SQRT2; // sqrt(2) / (1 + sqrt(2))
        let hyp_lo = 1.0 / (2.0 + SQRT2);
        let hyp_hi = (1.0 + SQRT2) / (2.0 + SQRT2);
        match self {
            Tile::TriL([a, b, c]) => {
                let ab = lerp(*a, *b, leg_t);
                let bc = lerp(*b, *c, leg_t);
                let ac1 = lerp(*a, *c, hyp_lo);
                let ac2 = lerp(*a, *c, hyp_hi);
                let x = sub(bc, scale(sub(*c, *a), hyp_lo));
                out.push(Tile::TriL([ab, ac1, *a]));
                out.push(Tile::TriL([bc, x, *b]));
                out.push(Tile::TriR([ac2, x, ac1]));
                out.push(Tile::Rhomb([ac1, ab, *b, x]));
                out.push(Tile::Rhomb([x, bc, *c, ac2]));
            }
            Tile::TriR([a, b, c]) => {
                let ab = lerp(*a, *b, leg_t);
                let bc = lerp(*b, *c, leg_t);
                let ac1 = lerp(*a, *c, hyp_lo);
                let ac2 = lerp(*a, *c, hyp_hi);
                let x = sub(bc, scale(sub(*c, *a), hyp_lo));
                out.push(Tile::TriL([ac2, x, ac1]));
                out.push(Tile::TriR([ab, ac1, *a]));
                out.push(Tile::TriR([bc, x, *b]));
                out.push(Tile::Rhomb([ac1, x, *b, ab]));
                out.push(Tile::Rhomb([x, ac2, *c, bc]));
            }
            Tile::Rhomb([a, b, c, d]) => {
                let t = SQRT2 - 1.0; // 1 / (1 + sqrt(2))
                let ab = lerp(*a, *b, t);
                let bc = lerp(*b, *c, leg_t);
                let cd = lerp(*d, *c, leg_t);
                let ad = lerp(*a, *d, t);
                let xa = add(ad, sub(ab, *a));
                let xc = sub(bc, sub(*c, cd));
                out.push(Tile::TriL([ad, xa, *d]));
                out.push(Tile::TriL([bc, xc, *b]));
                out.push(Tile::TriR([ab, xa, *b]));
                out.push(Tile::TriR([cd, xc, *d]));
                out.push(Tile::Rhomb([*a, ab, xa, ad]));
                out.push(Tile::Rhomb([xc, bc, *c, cd]));
                out.push(Tile::Rhomb([*b, xc, *d, xa]));
            }
        }
    }

    /// Tile edges (hypotenuses of triangles excluded).
    fn edges(&self) -> Vec<([f64; 2], [f64; 2])> {
        match self {
            Tile::TriL([a, b, c]) | Tile::TriR([a, b, c]) => vec![(*a, *b), (*b, *c)],
            Tile::Rhomb([a, b, c, d]) => vec![(*a, *b), (*b, *c), (*c, *d), (*d, *a)],
        }
    }
}

/// Deduplicate points to `DEDUP_TOL`, assigning stable indices in first-seen
/// order. Bucketed on a coarse grid so near-equal points in adjacent buckets
/// still merge.
struct PointIndex {
    points: Vec<[f64; 2]>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    cell: f64,
}

impl PointIndex {
    fn new() -> Self {
        PointIndex { points: Vec::new(), buckets: HashMap::new(), cell: 1e-3 }
    }

    fn key(&self, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / self.cell).round() as i64, (p[1] / self.cell).round() as i64)
    }

    fn insert(&mut self, p: [f64; 2]) -> usize {
        let (kx, ky) = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &i in ids {
                        if norm(sub(self.points[i], p)) < DEDUP_TOL {
                            return i;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.buckets.entry((kx, ky)).or_default().push(id);
        id
    }
}

/// Build an Ammann-Beenker patch by substitution on a unit square seed.
/// After `inflation_steps` subdivisions the patch is rescaled so every tile
/// edge has length 1.
pub fn build_ammann_beenker(spec: &LatticeSpec) -> Result<Lattice> {
    if spec.kind != LatticeKind::AmmannBeenker {
        return Err(Error::InvalidInput("build_ammann_beenker requires an Ammann-Beenker spec".into()));
    }
    if spec.inflation_steps < 1 {
        return Err(Error::InvalidInput("inflation_steps must be at least 1".into()));
    }

    let mut tiles = vec![
        Tile::TriL([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
        Tile::TriR([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
    ];
    for _ in 0..spec.inflation_steps {
        let mut next = Vec::with_capacity(tiles.len() * 7);
        for t in &tiles {
            t.subdivide(&mut next);
        }
        tiles = next;
    }

    // Rescale so tile edges have unit length.
    let s = (1.0 + SQRT2).powi(spec.inflation_steps as i32);
    let mut index = PointIndex::new();
    let mut edge_set: HashSet<(usize, usize)> = HashSet::new();
    for t in &tiles {
        for (p, q) in t.edges() {
            let i = index.insert(scale(p, s));
            let j = index.insert(scale(q, s));
            edge_set.insert((i.min(j), i.max(j)));
        }
    }

    let sites: Vec<Site> = index
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| Site { index: i, cell: None, sublattice: None, position: p })
        .collect();

    let mut bonds = Vec::with_capacity(2 * edge_set.len());
    let mut edges: Vec<_> = edge_set.into_iter().collect();
    edges.sort_unstable();
    for (i, j) in edges {
        let g = sub(sites[j].position, sites[i].position);
        let angle = bond_angle(g);
        let rev = bond_angle(scale(g, -1.0));
        bonds.push(Bond {
            from: i,
            to: j,
            kind: BondKind::Nn,
            nu: half_plane_sign(angle),
            angle,
            wrap: [0, 0],
        });
        bonds.push(Bond {
            from: j,
            to: i,
            kind: BondKind::Nn,
            nu: half_plane_sign(rev),
            angle: rev,
            wrap: [0, 0],
        });
    }

    Ok(Lattice {
        kind: LatticeKind::AmmannBeenker,
        boundary: Boundary::Dirichlet,
        l1: 0,
        l2: 0,
        sites,
        bonds,
    })
}

/// Dispatch on the spec kind.
pub fn build_lattice(spec: &LatticeSpec) -> Result<Lattice> {
    match spec.kind {
        LatticeKind::Honeycomb => build_honeycomb(spec),
        LatticeKind::AmmannBeenker => {
            if spec.boundary == Boundary::Periodic {
                return Err(Error::InvalidInput(
                    "Ammann-Beenker patches are always Dirichlet".into(),
                ));
            }
            build_ammann_beenker(spec)
        }
    }
}
