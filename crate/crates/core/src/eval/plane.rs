use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::mcd::mcd_set;
use crate::error::{Error, Result};
use crate::features::UtteranceFeatures;

/// The four feature sets placed on the MCD plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// Natural.
    N,
    /// Synthetic.
    S,
    /// Pseudo-converted.
    P,
    /// Enhanced.
    E,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::N, Label::S, Label::P, Label::E];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::N => "N",
            Label::S => "S",
            Label::P => "P",
            Label::E => "E",
        }
    }
}

/// A 2-D embedding of a distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding {
    pub coords: Vec<[f64; 2]>,
    /// `sqrt(sum (d_ij - delta_ij)^2 / sum delta_ij^2)` over `i < j`.
    pub stress: f64,
}

/// Classical (Torgerson) scaling into two dimensions: double-centre the
/// squared distances and keep the two leading eigenpairs. Negative
/// eigenvalues are clamped to zero, so non-Euclidean input shows up as
/// positive stress.
pub fn classical_mds(dist: &[Vec<f64>]) -> Result<MdsEmbedding> {
    let n = dist.len();
    if n == 0 || dist.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("distance matrix must be square and non-empty".into()));
    }
    if dist.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input("distances must be finite and non-negative".into()));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| {
        let d = 0.5 * (dist[i][j] + dist[j][i]);
        d * d
    });
    let row_mean: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(b);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // Fix the sign so the largest-magnitude component is positive.
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() + 1e-12 { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let scale = lambda.sqrt();
        for (c, x) in coords.iter_mut().zip(&v) {
            c[axis] = x * scale;
        }
    }
    for axis in 0..2 {
        let mean = coords.iter().map(|c| c[axis]).sum::<f64>() / n as f64;
        for c in &mut coords {
            c[axis] -= mean;
            if c[axis] == 0.0 {
                c[axis] = 0.0;
            }
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let delta = 0.5 * (dist[i][j] + dist[j][i]);
            let d = ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt();
            num += (d - delta).powi(2);
            den += delta * delta;
        }
    }
    let stress = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(MdsEmbedding { coords, stress })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdPlaneResult {
    pub labels: Vec<Label>,
    /// Symmetric mean-MCD matrix in dB, ordered like `labels`.
    pub dist: Vec<Vec<f64>>,
    pub coords: Vec<[f64; 2]>,
    pub stress: f64,
}

impl McdPlaneResult {
    /// Mean MCD between two labelled sets, if both are present.
    pub fn distance(&self, a: Label, b: Label) -> Option<f64> {
        let i = self.labels.iter().position(|&l| l == a)?;
        let j = self.labels.iter().position(|&l| l == b)?;
        Some(self.dist[i][j])
    }
}

/// Pairwise mean MCDs of the given sets and their planar embedding.
pub fn mcd_plane(sets: &[(Label, &[UtteranceFeatures])]) -> Result<McdPlaneResult> {
    let mut labels: Vec<Label> = sets.iter().map(|(l, _)| *l).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != sets.len() {
        return Err(Error::Input("each label may appear only once".into()));
    }
    let ordered: Vec<&[UtteranceFeatures]> = labels
        .iter()
        .map(|l| sets.iter().find(|(x, _)| x == l).unwrap().1)
        .collect();
    let n = labels.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = mcd_set(ordered[i], ordered[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let emb = classical_mds(&dist)?;
    Ok(McdPlaneResult {
        labels,
        dist,
        coords: emb.coords,
        stress: emb.stress,
    })
}

/// Labelled distance matrix, three decimals.
pub fn plane_tsv(result: &McdPlaneResult) -> String {
    let mut out = String::new();
    for l in &result.labels {
        out.push('\t');
        out.push_str(l.as_str());
    }
    out.push('\n');
    for (l, row) in result.labels.iter().zip(&result.dist) {
        out.push_str(l.as_str());
        for v in row {
            write!(out, "\t{v:.3}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Static SVG scatter of the embedding with every pairwise edge annotated by
/// its mean MCD.
pub fn plane_svg(result: &McdPlaneResult) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 60.0;
    let extent = result
        .coords
        .iter()
        .flat_map(|c| [c[0].abs(), c[1].abs()])
        .fold(0.0f64, f64::max);
    let scale = if extent > 0.0 { (SIZE / 2.0 - MARGIN) / extent } else { 0.0 };
    let pos = |c: &[f64; 2]| (SIZE / 2.0 + c[0] * scale, SIZE / 2.0 - c[1] * scale);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    let n = result.labels.len();
    for i in 0..n {
        for j in i + 1..n {
            let (x1, y1) = pos(&result.coords[i]);
            let (x2, y2) = pos(&result.coords[j]);
            writeln!(
                s,
                r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#999" stroke-width="1"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r##"<text class="edge" x="{:.2}" y="{:.2}" font-size="11" fill="#555" text-anchor="middle">{:.2} dB</text>"##,
                (x1 + x2) / 2.0,
                (y1 + y2) / 2.0 - 4.0,
                result.dist[i][j]
            )
            .unwrap();
        }
    }
    for (l, c) in result.labels.iter().zip(&result.coords) {
        let (x, y) = pos(c);
        writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="black"/>"#).unwrap();
        writeln!(
            s,
            r#"<text class="label" x="{:.2}" y="{:.2}" font-size="16" font-weight="bold">{}</text>"#,
            x + 8.0,
            y - 8.0,
            l.as_str()
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text class="stress" x="10" y="{:.2}" font-size="11">stress {:.4}</text>"#,
        SIZE - 10.0,
        result.stress
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn emit_plane(result: &McdPlaneResult, svg_path: impl AsRef<Path>, tsv_path: impl AsRef<Path>) -> Result<()> {
    let (svg_path, tsv_path) = (svg_path.as_ref(), tsv_path.as_ref());
    fs::write(tsv_path, plane_tsv(result)).map_err(|e| Error::io(tsv_path, e))?;
    fs::write(svg_path, plane_svg(result)).map_err(|e| Error::io(svg_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(coords: &[[f64; 2]]) -> Vec<Vec<f64>> {
        coords
            .iter()
            .map(|a| {
                coords
                    .iter()
                    .map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn right_triangle_is_exact() {
        let dist = vec![vec![0.0, 3.0, 4.0], vec![3.0, 0.0, 5.0], vec![4.0, 5.0, 0.0]];
        let emb = classical_mds(&dist).unwrap();
        let back = pairwise(&emb.coords);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - dist[i][j]).abs() < 1e-6);
            }
        }
        assert!(emb.stress < 1e-6);
        let cx: f64 = emb.coords.iter().map(|c| c[0]).sum();
        assert!(cx.abs() < 1e-9);
    }

    #[test]
    fn non_euclidean_input_reports_stress() {
        // Violates the triangle inequality.
        let dist = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        let emb = classical_mds(&dist).unwrap();
        assert!(emb.stress > 0.0);
        // A regular tetrahedron needs three dimensions.
        let tet = vec![vec![0.0, 1.0, 1.0, 1.0], vec![1.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0, 0.0]];
        assert!(classical_mds(&tet).unwrap().stress > 0.01);
    }

    #[test]
    fn zero_matrix_collapses_to_origin() {
        let emb = classical_mds(&vec![vec![0.0; 4]; 4]).unwrap();
        assert!(emb.coords.iter().all(|c| c == &[0.0, 0.0]));
        assert_eq!(emb.stress, 0.0);
    }

    fn result_zero() -> McdPlaneResult {
        McdPlaneResult {
            labels: Label::ALL.to_vec(),
            dist: vec![vec![0.0; 4]; 4],
            coords: vec![[0.0; 2]; 4],
            stress: 0.0,
        }
    }

    #[test]
    fn tsv_of_zero_matrix() {
        let tsv = plane_tsv(&result_zero());
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "\tN\tS\tP\tE");
        for line in &lines[1..] {
            assert!(line.split('\t').skip(1).all(|c| c == "0.000"));
        }
    }

    #[test]
    fn svg_has_one_label_per_point() {
        let svg = plane_svg(&result_zero());
        assert_eq!(svg.matches(r#"class="label""#).count(), 4);
        for l in Label::ALL {
            assert_eq!(svg.matches(&format!(">{}</text>", l.as_str())).count(), 1);
        }
    }
}
