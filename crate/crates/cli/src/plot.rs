//! Static Risk–Complexity plots. The output depends only on the input values,
//! so identical CSVs render to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use pacbayes::certify::{pareto_front, read_certificates, read_reference, BoundCertificate, ParetoPoint};
use pacbayes::posterior::{Family, Validity};

use crate::{CliError, PlotArgs};

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const LOG_MIN: f64 = 1e-3;

const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// One labelled front.
#[derive(Clone, Debug, PartialEq)]
pub struct Front {
    pub family: Family,
    pub validity: Validity,
    pub points: Vec<ParetoPoint>,
}

/// Pareto front of each family present in `certs`, in family order.
pub fn fronts(certs: &[BoundCertificate]) -> Vec<Front> {
    let mut by_family: BTreeMap<Family, Vec<ParetoPoint>> = BTreeMap::new();
    for c in certs {
        by_family.entry(c.family).or_default().push(ParetoPoint::from_certificate(c));
    }
    by_family.into_iter().map(|(family, pts)| Front { family, validity: family.validity(), points: pareto_front(&pts) }).collect()
}

struct Axes {
    log_x: bool,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        let u = if self.log_x { (x.max(LOG_MIN).log10() - LOG_MIN.log10()) / -LOG_MIN.log10() } else { x };
        LEFT + u.clamp(0.0, 1.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - y.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn star_path(cx: f64, cy: f64, r: f64) -> String {
    let mut d = String::new();
    for i in 0..10 {
        let radius = if i % 2 == 0 { r } else { 0.45 * r };
        let angle = std::f64::consts::PI * (i as f64 / 5.0 - 0.5);
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.2},{:.2} ", cx + radius * angle.cos(), cy + radius * angle.sin());
    }
    d.push('Z');
    d
}

/// SVG with the non-vacuity line `y = 1 − x`, one front per family and an
/// optional reference star.
pub fn render(fronts: &[Front], reference: Option<&ParetoPoint>, log_x: bool) -> String {
    let ax = Axes { log_x };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let (x0, x1, y0, y1) = (ax.px(if log_x { LOG_MIN } else { 0.0 }), ax.px(1.0), ax.py(0.0), ax.py(1.0));
    let _ = writeln!(s, r#"<g stroke="black" fill="none"><path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}"/></g>"#);
    let x_ticks: Vec<(f64, String)> = if log_x {
        vec![(1e-3, "0.001".into()), (1e-2, "0.01".into()), (1e-1, "0.1".into()), (1.0, "1".into())]
    } else {
        (0..=5).map(|i| (i as f64 / 5.0, format!("{:.1}", i as f64 / 5.0))).collect()
    };
    for (v, label) in &x_ticks {
        let x = ax.px(*v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, y0 + 18.0);
    }
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = ax.py(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Empirical risk</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Complexity</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    // Points below this line have non-vacuous bounds.
    let line: Vec<String> = if log_x {
        (0..=60)
            .map(|i| {
                let x = 10f64.powf(LOG_MIN.log10() * (1.0 - i as f64 / 60.0));
                format!("{:.2},{:.2}", ax.px(x), ax.py(1.0 - x))
            })
            .collect()
    } else {
        vec![format!("{:.2},{:.2}", ax.px(0.0), ax.py(1.0)), format!("{:.2},{:.2}", ax.px(1.0), ax.py(0.0))]
    };
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="gray" stroke-dasharray="6,4"/>"#, line.join(" "));

    for (i, front) in fronts.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if front.validity == Validity::InvalidPrior { r#" stroke-dasharray="2,3""# } else { "" };
        let pts: Vec<String> = front.points.iter().map(|p| format!("{:.2},{:.2}", ax.px(p.x), ax.py(p.y))).collect();
        let _ = writeln!(s, r#"<g class="front" data-family="{}">"#, front.family);
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
        }
        for p in &front.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, ax.px(p.x), ax.py(p.y));
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let label = match front.validity {
            Validity::Valid => front.family.to_string(),
            Validity::InvalidPrior => format!("{} (invalid prior)", front.family),
        };
        let _ =
            writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 26.0, ly + 4.0);
    }
    if let Some(r) = reference {
        let _ = writeln!(s, r#"<path class="reference" d="{}" fill="gold" stroke="black"/>"#, star_path(ax.px(r.x), ax.py(r.y), 8.0));
    }
    s.push_str("</svg>\n");
    s
}

pub fn command(args: &PlotArgs) -> Result<(), CliError> {
    let mut certs = Vec::new();
    for path in &args.inputs {
        let file = fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let parsed = read_certificates(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        certs.extend(parsed);
    }
    let reference = match &args.reference {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            Some(read_reference(file).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let svg = render(&fronts(&certs), reference.as_ref(), args.log_x);
    match &args.output {
        Some(p) => fs::write(p, svg).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{svg}");
            Ok(())
        }
    }
}
