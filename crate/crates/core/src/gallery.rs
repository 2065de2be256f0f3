//! Worked-example fixtures with structured expectations, and a runner that
//! replays them through the pipeline.

use std::cell::OnceCell;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::certify::{
    check_bprime_cprime, check_condition_b, check_pair_b, ClassCase,
    PairStatus, Tri, Verdict, DEFAULT_TOL,
};
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::exact::{run_pipeline, solve_relaxation, Exactness, PipelineConfig, PipelineVerdict};
use crate::model::{
    ball_matrix, build_family, eval_quadratic, generalized_hyperbola_matrix, hyperbola_limit_matrix,
    parabola_matrix, Centers, ConstraintFamily, ConstraintSet, GeoCop, ParabolaSpec,
};
use crate::oracle::{solve_region_2d, solve_sphere, Box2};
use crate::plot::{rasterize, sign_mismatches, to_ppm};
use crate::sdp::{best_ab_combination, SdpStatus};
use crate::symmat::{lambda_min, SymMat};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    /// Stated or displayed in the source worked example.
    #[serde(rename = "PAPER")]
    Paper,
    /// Computed by an independent check and frozen.
    #[serde(rename = "DERIVED")]
    Derived,
    /// Follows from counting or definitions.
    #[serde(rename = "TRIVIAL")]
    Trivial,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    MemberCount { count: usize },
    /// Spot values `(member, row, col, value)` of the input matrices.
    Entries { entries: Vec<(usize, usize, usize, f64)> },
    /// Condition (B) on the input set, before any reduction.
    InputConditionB { status: PairStatus },
    /// Refutation of (B) on an input pair by a matrix with `⟨B,X⟩ = 0`,
    /// `⟨A,X⟩ < 0` (either orientation).
    PairWitness { i: usize, j: usize, x: SymMat, zero: f64, negative: f64 },
    /// No positive combination `αA + βB` is PSD.
    NoAbCertificate { i: usize, j: usize },
    BPrime { status: PairStatus },
    CPrime { holds: Tri },
    /// A point `u` with `q(u,1,A) < 0` and `q(u,1,B) < 0`.
    JointWitness { i: usize, j: usize, u: Vec<f64>, tol: f64 },
    MemberPsd { index: usize, tol: f64 },
    ReducedDim { n: usize },
    ReducedMembers { members: Vec<SymMat>, tol: f64 },
    Kept { indices: Vec<usize> },
    /// Certificate of a pair of the pruned set.
    PairCertificate { i: usize, j: usize, alpha: f64, beta: f64, margin: f64, tol: f64 },
    Classification { case: ClassCase },
    Overall { verdict: Verdict },
    Exactness { exactness: Exactness },
    SdpValue { value: f64, tol: f64 },
    /// `x_i x_j` of the extracted rank-one point.
    RankOneProduct { i: usize, j: usize, value: f64, tol: f64 },
    Eigenratio { at_least: f64 },
    RankOneResidual { at_most: f64 },
    OracleAgreement { samples: usize, rel_tol: f64 },
    /// Condition (B) on `{Lᵀ B L}` for the attached congruence.
    TransformedConditionB { status: PairStatus },
    /// `‖L y − x‖ ≤ tol` for the reported preimage.
    CongruencePreimage { tol: f64 },
    /// Relaxation value over nested lattice truncations is non-decreasing.
    Monotone { radius: f64, step: f64, bounds: Vec<f64> },
    /// Doubling `τ` from `start` until `{B(λ,σ), B(λ,τ)}` passes (B)′ and (C)′.
    TauSearch { lambda: Vec<f64>, ell: usize, sigma: f64, start: f64, expected: f64 },
    GrayFraction { bx: Box2, resolution: usize, value: f64, rel_tol: f64 },
    PlotSign { bx: Box2, resolution: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct Expectation {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Clone, Debug, Serialize)]
pub struct GalleryCase {
    pub id: &'static str,
    pub description: &'static str,
    pub problem: GeoCop,
    pub expected: Vec<Expectation>,
}

const IDS: &[&str] = &[
    "ex6.1",
    "ex6.1-reduced",
    "fig1-combo-B1B2B3",
    "fig1-combo-B1B6",
    "fig1-combo-B1B3B5",
    "fig1-combo-B2B4",
    "fig1-combo-B1B2B3-r1",
    "fig1-combo-B1B6-r1",
    "fig1-combo-B1B3B5-r1",
    "fig1-combo-B2B4-r1",
    "fig1-overlap",
    "fig2",
    "ex6.2",
    "ex6.3",
    "ex6.3-limit",
    "ex6.3-ext",
    "ex6.4",
    "ex6.5-fig6b",
    "ex6.5-fig6c",
];

pub fn list_ids() -> &'static [&'static str] {
    IDS
}

fn m(rows: &[&[f64]]) -> SymMat {
    SymMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixture matrices are symmetric")
}

fn e(provenance: Provenance, check: Check) -> Expectation {
    Expectation { provenance, check }
}

use Provenance::{Derived, Paper, Trivial};

pub fn example_a_prime() -> SymMat {
    m(&[
        &[2.0, 1.0, 0.0, 0.0],
        &[1.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, -1.0, 0.0],
        &[0.0, 0.0, 0.0, -1.0],
    ])
}

pub fn example_b_prime() -> SymMat {
    m(&[
        &[-1.0, -2.0, 0.0, -1.0],
        &[-2.0, -1.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, -1.0],
        &[-1.0, 0.0, -1.0, -1.0],
    ])
}

pub fn example_c_prime() -> SymMat {
    m(&[
        &[1.0, 2.0, 0.0, 1.0],
        &[2.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, -3.0, 2.0],
        &[1.0, 0.0, 2.0, -1.0],
    ])
}

/// The 2×2 matrices obtained after removing the two null directions.
pub fn reduced_example() -> [SymMat; 3] {
    [
        m(&[&[2.0, 1.0], &[1.0, 1.0]]),
        m(&[&[-1.0, -2.0], &[-2.0, -1.0]]),
        m(&[&[1.0, 2.0], &[2.0, 1.0]]),
    ]
}

/// The six planar forms `B₁ … B₆` in `(u₁, u₂, z)`.
pub fn figure_one_forms(r: f64) -> [SymMat; 6] {
    [
        SymMat::diag(&[1.0, 1.0, -r]),
        SymMat::diag(&[-1.0, 1.0, 1.0]),
        m(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, -0.5], &[0.0, -0.5, 1.0]]),
        SymMat::diag(&[1.0, -1.0, 0.0]),
        m(&[&[0.0, 0.0, 0.5], &[0.0, 0.0, 0.0], &[0.5, 0.0, 1.0]]),
        SymMat::diag(&[-1.0, -1.0, 1.0]),
    ]
}

/// Eight ring disks, the inner unit disk, and the complement of the
/// radius-2 disk.
pub fn figure_two_set() -> ConstraintSet {
    let mut members: Vec<SymMat> = (0..8)
        .map(|k| {
            let a = k as f64 * std::f64::consts::FRAC_PI_4;
            ball_matrix(&[1.5 * a.cos(), 1.5 * a.sin()], 0.5)
        })
        .collect();
    members.push(ball_matrix(&[0.0, 0.0], 1.0));
    members.push(ball_matrix(&[0.0, 0.0], 2.0).neg());
    ConstraintSet::new(3, members).expect("n = 3").with_provenance("fig2")
}

fn planar_objective() -> SymMat {
    SymMat::diag(&[1.0, -1.0, 0.0])
}

fn planar(set: ConstraintSet) -> GeoCop {
    GeoCop::new(planar_objective(), SymMat::identity(3), set).expect("n = 3")
}

/// A fixed indefinite objective with no special alignment to the data.
fn skew_objective() -> SymMat {
    m(&[&[1.0, 0.3, -0.2], &[0.3, -1.0, 0.5], &[-0.2, 0.5, 0.2]])
}

fn rotation(quarter_turns: u32) -> Vec<Vec<f64>> {
    let (c, s) = match quarter_turns % 4 {
        0 => (1.0, 0.0),
        1 => (0.0, 1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, -1.0),
    };
    vec![vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, 1.0]]
}

fn parabola(l2: f64, l3: f64, orientation: f64, turns: u32) -> SymMat {
    parabola_matrix(&ParabolaSpec {
        lambdas: vec![l2, l3],
        orientation,
        transform: (turns != 0).then(|| rotation(turns)),
    })
    .expect("valid parabola")
}

pub const HYPERBOLA_BREAKPOINTS: [f64; 4] = [0.0, 1.0, 2.0, 4.0];
pub const HYPERBOLA_R2: f64 = 0.5;
/// Accumulation point of the constructed breakpoint tail `5 − 2⁻ᵏ`.
pub const HYPERBOLA_LIMIT: f64 = 5.0;

fn hyperbola_set() -> ConstraintSet {
    build_family(
        &ConstraintFamily::Hyperbola {
            breakpoints: HYPERBOLA_BREAKPOINTS.to_vec(),
            r2: HYPERBOLA_R2,
            limit: Some(HYPERBOLA_LIMIT),
        },
        3,
    )
    .expect("valid hyperbola family")
}

pub fn ball_lattice(radius: f64, step: f64, bound: f64) -> Result<ConstraintSet> {
    build_family(
        &ConstraintFamily::BallGrid {
            centers: Centers::Lattice { dim: 2, step, bound },
            radius,
        },
        3,
    )
}

fn combo(name: &str) -> Option<Vec<usize>> {
    Some(match name {
        "B1B2B3" => vec![0, 1, 2],
        "B1B6" => vec![0, 5],
        "B1B3B5" => vec![0, 2, 4],
        "B2B4" => vec![1, 3],
        _ => return None,
    })
}

pub fn build_case(id: &str) -> Result<GalleryCase> {
    let unknown = || Error::UnknownCase(id.to_string());
    let case = match id {
        "ex6.1" => {
            let s = ConstraintSet::new(4, vec![example_a_prime(), example_b_prime(), example_c_prime()])?
                .with_provenance("ex6.1");
            let p = GeoCop::new(SymMat::diag(&[1.0, -1.0, 0.0, 0.0]), SymMat::identity(4), s)?;
            GalleryCase {
                id: "ex6.1",
                description: "4×4 set whose feasible cone lies in a 2-dimensional face",
                problem: p,
                expected: vec![
                    e(Trivial, Check::MemberCount { count: 3 }),
                    e(
                        Paper,
                        Check::Entries {
                            entries: vec![(0, 0, 0, 2.0), (0, 0, 1, 1.0), (1, 0, 3, -1.0), (2, 2, 2, -3.0)],
                        },
                    ),
                    e(Paper, Check::InputConditionB { status: PairStatus::Refuted }),
                    e(
                        Paper,
                        Check::PairWitness {
                            i: 0,
                            j: 1,
                            x: SymMat::diag(&[0.0, 0.0, 1.0, 1.0]),
                            zero: 0.0,
                            negative: -2.0,
                        },
                    ),
                    e(Paper, Check::NoAbCertificate { i: 0, j: 1 }),
                    e(Paper, Check::ReducedDim { n: 2 }),
                    e(
                        Paper,
                        Check::ReducedMembers {
                            members: reduced_example().to_vec(),
                            tol: 1e-12,
                        },
                    ),
                    e(Paper, Check::Kept { indices: vec![1, 2] }),
                    e(
                        Paper,
                        Check::PairCertificate {
                            i: 0,
                            j: 1,
                            alpha: 1.0,
                            beta: 1.0,
                            margin: 0.0,
                            tol: 1e-12,
                        },
                    ),
                    e(
                        Paper,
                        Check::Classification {
                            case: ClassCase::A { exposing_index: 0 },
                        },
                    ),
                    e(Paper, Check::Overall { verdict: Verdict::Certified }),
                    e(Derived, Check::Exactness { exactness: Exactness::CertifiedExact }),
                    e(
                        Derived,
                        Check::SdpValue {
                            value: -(3f64.sqrt()) / 2.0,
                            tol: 1e-6,
                        },
                    ),
                ],
            }
        }
        "ex6.1-reduced" => {
            let s = ConstraintSet::new(2, reduced_example().to_vec())?.with_provenance("ex6.1-reduced");
            let p = GeoCop::new(SymMat::diag(&[1.0, -1.0]), SymMat::identity(2), s)?;
            GalleryCase {
                id: "ex6.1-reduced",
                description: "the reduced 2×2 cone: x₁x₂ = −1/4 on the unit circle",
                problem: p,
                expected: vec![
                    e(Paper, Check::Overall { verdict: Verdict::Certified }),
                    e(Derived, Check::Exactness { exactness: Exactness::CertifiedExact }),
                    // Oracle: on the circle the feasible arc is sin 2θ = −1/2.
                    e(
                        Derived,
                        Check::SdpValue {
                            value: -(3f64.sqrt()) / 2.0,
                            tol: 1e-6,
                        },
                    ),
                    e(
                        Derived,
                        Check::RankOneProduct {
                            i: 0,
                            j: 1,
                            value: -0.25,
                            tol: 1e-6,
                        },
                    ),
                    e(Derived, Check::Eigenratio { at_least: 1e6 }),
                    e(
                        Derived,
                        Check::OracleAgreement {
                            samples: 100_000,
                            rel_tol: 1e-3,
                        },
                    ),
                ],
            }
        }
        "fig1-overlap" => {
            let s = ConstraintSet::new(
                3,
                vec![ball_matrix(&[0.0, 0.0], 0.5), ball_matrix(&[0.5, 0.0], 0.5)],
            )?
            .with_provenance("fig1-overlap");
            GalleryCase {
                id: "fig1-overlap",
                description: "two overlapping disks of radius 1/2; not a separated pair",
                problem: planar(s),
                expected: vec![
                    e(Derived, Check::BPrime { status: PairStatus::Refuted }),
                    e(
                        Derived,
                        Check::JointWitness {
                            i: 0,
                            j: 1,
                            u: vec![0.25, 0.0],
                            tol: 1e-8,
                        },
                    ),
                    e(Derived, Check::Overall { verdict: Verdict::NotCertified }),
                ],
            }
        }
        "fig2" => GalleryCase {
            id: "fig2",
            description: "ring of eight disks inside an annulus",
            problem: planar(figure_two_set()),
            expected: vec![
                e(Paper, Check::MemberCount { count: 10 }),
                e(Paper, Check::BPrime { status: PairStatus::Certified }),
                e(Paper, Check::CPrime { holds: Tri::Yes }),
                e(Paper, Check::Overall { verdict: Verdict::Certified }),
                // Annulus 3π minus eight disks of area π/4.
                e(
                    Derived,
                    Check::GrayFraction {
                        bx: Box2::square(2.5),
                        resolution: 800,
                        value: std::f64::consts::PI / 25.0,
                        rel_tol: 0.01,
                    },
                ),
                e(
                    Derived,
                    Check::PlotSign {
                        bx: Box2::square(2.5),
                        resolution: 400,
                    },
                ),
            ],
        },
        "ex6.2" => {
            let s = ball_lattice(0.5, 1.0, 2.0)?;
            let p = GeoCop::new(skew_objective(), SymMat::identity(3), s)?;
            GalleryCase {
                id: "ex6.2",
                description: "radius-1/2 disks centered on the integer lattice in [−2,2]²",
                problem: p,
                expected: vec![
                    e(Trivial, Check::MemberCount { count: 25 }),
                    e(Paper, Check::InputConditionB { status: PairStatus::Certified }),
                    e(Derived, Check::RankOneResidual { at_most: 1e-5 }),
                    e(
                        Paper,
                        Check::Monotone {
                            radius: 0.5,
                            step: 1.0,
                            bounds: vec![0.0, 1.0, 2.0],
                        },
                    ),
                ],
            }
        }
        "ex6.3" => GalleryCase {
            id: "ex6.3",
            description: "three hyperbola pieces with breakpoints 0, 1, 2, 4",
            problem: planar(hyperbola_set()),
            expected: vec![
                e(Trivial, Check::MemberCount { count: 3 }),
                e(Paper, Check::BPrime { status: PairStatus::Certified }),
                e(Derived, Check::InputConditionB { status: PairStatus::Certified }),
            ],
        },
        "ex6.3-limit" => {
            let mut s = hyperbola_set();
            s.members.push(hyperbola_limit_matrix(HYPERBOLA_LIMIT, HYPERBOLA_R2));
            GalleryCase {
                id: "ex6.3-limit",
                description: "hyperbola pieces plus the limit of the breakpoint tail",
                problem: planar(s.with_provenance("ex6.3-limit")),
                expected: vec![
                    e(Paper, Check::MemberPsd { index: 3, tol: 1e-10 }),
                    e(Paper, Check::CPrime { holds: Tri::No }),
                ],
            }
        }
        "ex6.3-ext" => {
            // x = L y with two independent directions b, c in the leading block.
            let l = vec![
                vec![1.0, 0.0, 1.0, 0.0],
                vec![0.0, 1.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ];
            let p = planar(hyperbola_set()).with_congruence(l);
            GalleryCase {
                id: "ex6.3-ext",
                description: "hyperbola pieces pulled back to R⁴ through a 3×4 map",
                problem: p,
                expected: vec![
                    e(Derived, Check::TransformedConditionB { status: PairStatus::Certified }),
                    e(Derived, Check::CongruencePreimage { tol: 1e-8 }),
                ],
            }
        }
        "ex6.4" => {
            let lambda = vec![1.0, 1.0, 1.0];
            let s = ConstraintSet::new(
                3,
                vec![
                    generalized_hyperbola_matrix(&lambda, 1, 0.0)?,
                    generalized_hyperbola_matrix(&lambda, 1, 2.0)?,
                ],
            )?
            .with_provenance("ex6.4");
            GalleryCase {
                id: "ex6.4",
                description: "generalized hyperbolas B(λ,0) and B(λ,τ*)",
                problem: planar(s),
                expected: vec![
                    e(
                        Derived,
                        Check::TauSearch {
                            lambda,
                            ell: 1,
                            sigma: 0.0,
                            start: 1.0,
                            expected: 2.0,
                        },
                    ),
                    e(Paper, Check::BPrime { status: PairStatus::Certified }),
                    e(Paper, Check::CPrime { holds: Tri::Yes }),
                ],
            }
        }
        "ex6.5-fig6b" => {
            let s = ConstraintSet::new(
                3,
                (0..3).map(|k| parabola(16.0, 3.0, 1.0, k)).collect(),
            )?
            .with_provenance("ex6.5-fig6b");
            let bx = Box2::square(4.0);
            GalleryCase {
                id: "ex6.5-fig6b",
                description: "three copies of one parabola turned by 0°, 90° and 180°",
                problem: planar(s),
                expected: vec![
                    e(Paper, Check::BPrime { status: PairStatus::Certified }),
                    e(Paper, Check::CPrime { holds: Tri::Yes }),
                    e(Paper, Check::Overall { verdict: Verdict::Certified }),
                    e(Derived, Check::PlotSign { bx, resolution: 400 }),
                ],
            }
        }
        "ex6.5-fig6c" => {
            let s = ConstraintSet::new(
                3,
                vec![parabola(16.0, 3.0, 1.0, 0), parabola(16.0, 1.0, -1.0, 0)],
            )?
            .with_provenance("ex6.5-fig6c");
            let bx = Box2 {
                lo: [-1.0, -1.0],
                hi: [7.0, 1.0],
            };
            GalleryCase {
                id: "ex6.5-fig6c",
                description: "region between two nested parabolas",
                problem: planar(s),
                expected: vec![
                    e(Paper, Check::BPrime { status: PairStatus::Certified }),
                    e(Paper, Check::CPrime { holds: Tri::Yes }),
                    e(Paper, Check::Overall { verdict: Verdict::Certified }),
                    e(Derived, Check::PlotSign { bx, resolution: 400 }),
                ],
            }
        }
        other => {
            let rest = other.strip_prefix("fig1-combo-").ok_or_else(unknown)?;
            let (name, r, r1) = match rest.strip_suffix("-r1") {
                Some(n) => (n, 1.0, true),
                None => (rest, 0.5, false),
            };
            let pick = combo(name).ok_or_else(unknown)?;
            let forms = figure_one_forms(r);
            let s = ConstraintSet::new(3, pick.iter().map(|k| forms[*k].clone()).collect())?;
            let id = IDS.iter().find(|x| **x == other).ok_or_else(unknown)?;
            GalleryCase {
                id,
                description: if r1 {
                    "planar forms from the catalogue with r = 1"
                } else {
                    "planar forms from the catalogue with r = 1/2"
                },
                problem: planar(s.with_provenance(other)),
                expected: vec![
                    e(Paper, Check::BPrime { status: PairStatus::Certified }),
                    e(Paper, Check::CPrime { holds: Tri::Yes }),
                ],
            }
        }
    };
    Ok(case)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub provenance: Provenance,
    pub passed: bool,
    /// Slack of the comparison when it is numeric (`≥ 0` passes).
    pub margin: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub id: String,
    pub passed: bool,
    pub skipped: bool,
    pub seconds: f64,
    pub error: Option<String>,
    pub checks: Vec<CheckResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub cases: Vec<CaseReport>,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.skipped == 0
    }
}

/// Lazily computed results shared by the checks of one case.
struct Ctx<'a> {
    case: &'a GalleryCase,
    cfg: PipelineConfig,
    pipeline: OnceCell<std::result::Result<PipelineVerdict, String>>,
}

impl<'a> Ctx<'a> {
    fn pipeline(&self) -> std::result::Result<&PipelineVerdict, String> {
        self.pipeline
            .get_or_init(|| run_pipeline(&self.case.problem, &self.cfg).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| e.clone())
    }


    fn set(&self) -> &ConstraintSet {
        &self.case.problem.bset
    }
}

type Outcome = std::result::Result<(bool, Option<f64>, String), String>;

fn within(found: f64, want: f64, tol: f64) -> (bool, Option<f64>, String) {
    let slack = tol - (found - want).abs();
    (slack >= 0.0, Some(slack), format!("found {found}, expected {want} ± {tol}"))
}

fn eq_status<T: PartialEq + std::fmt::Debug>(found: T, want: T) -> (bool, Option<f64>, String) {
    (found == want, None, format!("found {found:?}, expected {want:?}"))
}

fn err(e: Error) -> String {
    e.to_string()
}

fn evaluate(ctx: &Ctx, check: &Check) -> Outcome {
    let tol = ctx.cfg.tol;
    Ok(match check {
        Check::MemberCount { count } => eq_status(ctx.set().len(), *count),
        Check::Entries { entries } => {
            let bad: Vec<_> = entries
                .iter()
                .filter(|(k, i, j, v)| ctx.set().members.get(*k).map(|b| b.get(*i, *j)) != Some(*v))
                .collect();
            (bad.is_empty(), None, format!("mismatched entries: {bad:?}"))
        }
        Check::InputConditionB { status } => {
            let r = check_condition_b(ctx.set(), tol).map_err(err)?;
            let certified = r.pairs.iter().filter(|p| p.verdict.status == PairStatus::Certified).count();
            let (ok, _, d) = eq_status(r.status, *status);
            (ok, None, format!("{d}; {certified}/{} pairs certified", r.pairs.len()))
        }
        Check::PairWitness { i, j, x, zero, negative } => {
            let (a, b) = (&ctx.set().members[*i], &ctx.set().members[*j]);
            let v = check_pair_b(a, b, tol).map_err(err)?;
            match v.witness {
                None => (false, None, format!("no witness; status {:?}", v.status)),
                Some(w) => {
                    // Exact values on the input matrices.
                    let (first, second) = if w.swapped { (b, a) } else { (a, b) };
                    let z = second.dot(&w.x);
                    let n = first.dot(&w.x);
                    let ok = w.x == *x && z == *zero && n == *negative;
                    (ok, None, format!("X = {:?}, ⟨B,X⟩ = {z}, ⟨A,X⟩ = {n}", w.x))
                }
            }
        }
        Check::NoAbCertificate { i, j } => {
            let c = best_ab_combination(&ctx.set().members[*i], &ctx.set().members[*j]).map_err(err)?;
            (c.margin < -tol, Some(-tol - c.margin), format!("best margin {}", c.margin))
        }
        Check::BPrime { status } => {
            let r = check_bprime_cprime(ctx.set(), tol).map_err(err)?;
            let bad: Vec<_> = r
                .pairs
                .iter()
                .filter(|p| p.status != PairStatus::Certified)
                .map(|p| (p.i, p.j, p.status, p.witness.clone()))
                .collect();
            let (ok, _, d) = eq_status(r.b_prime, *status);
            (ok, None, format!("{d}; uncertified pairs {bad:?}"))
        }
        Check::CPrime { holds } => {
            let r = check_bprime_cprime(ctx.set(), tol).map_err(err)?;
            eq_status(r.c_prime, *holds)
        }
        Check::JointWitness { i, j, u, tol: wtol } => {
            let r = check_bprime_cprime(ctx.set(), tol).map_err(err)?;
            let entry = r.pairs.iter().find(|p| (p.i, p.j) == (*i, *j));
            match entry.and_then(|p| p.witness.clone()) {
                None => (false, None, "no witness point".into()),
                Some(w) => {
                    let qa = eval_quadratic(&w, 1.0, &ctx.set().members[*i]).map_err(err)?;
                    let qb = eval_quadratic(&w, 1.0, &ctx.set().members[*j]).map_err(err)?;
                    let dist = w.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let ok = qa < 0.0 && qb < 0.0 && dist <= *wtol;
                    (ok, Some(wtol - dist), format!("u = {w:?}, q = ({qa}, {qb})"))
                }
            }
        }
        Check::MemberPsd { index, tol: ptol } => {
            let l = lambda_min(&ctx.set().members[*index]).map_err(err)?;
            (l >= -ptol, Some(l + ptol), format!("λ_min = {l}"))
        }
        Check::ReducedDim { n } => eq_status(ctx.pipeline()?.reduction.reduced_n, *n),
        Check::ReducedMembers { members, tol: mtol } => {
            let got = &ctx.pipeline()?.reduction.reduced.bset.members;
            if got.len() != members.len() || got.iter().any(|g| g.n() != members[0].n()) {
                (false, None, format!("shape mismatch: {got:?}"))
            } else {
                let dev = got
                    .iter()
                    .zip(members)
                    .map(|(g, w)| g.sub(w).max_abs())
                    .fold(0.0, f64::max);
                (dev <= *mtol, Some(mtol - dev), format!("max deviation {dev}; {got:?}"))
            }
        }
        Check::Kept { indices } => eq_status(ctx.pipeline()?.pruning.kept.clone(), indices.clone()),
        Check::PairCertificate { i, j, alpha, beta, margin, tol: ctol } => {
            let v = ctx.pipeline()?;
            let cert = v.cert.as_ref().ok_or("no certification report")?;
            let entry = cert.condition_b.pairs.iter().find(|p| (p.i, p.j) == (*i, *j));
            match entry.and_then(|p| p.verdict.certificate) {
                None => (false, None, "no certificate".into()),
                Some(c) => {
                    let dev = (c.alpha - alpha)
                        .abs()
                        .max((c.beta - beta).abs())
                        .max((c.margin - margin).abs());
                    (dev <= *ctol, Some(ctol - dev), format!("found {c:?}"))
                }
            }
        }
        Check::Classification { case } => {
            let v = ctx.pipeline()?;
            let c = v
                .cert
                .as_ref()
                .and_then(|c| c.classification.as_ref())
                .ok_or("no classification")?;
            eq_status(c.case, *case)
        }
        Check::Overall { verdict } => {
            let v = ctx.pipeline()?;
            let found = v.cert.as_ref().map(|c| c.overall).ok_or("no certification report")?;
            eq_status(found, *verdict)
        }
        Check::Exactness { exactness } => eq_status(ctx.pipeline()?.exactness, *exactness),
        Check::SdpValue { value, tol: vtol } => within(ctx.pipeline()?.sdp_value, *value, *vtol),
        Check::RankOneProduct { i, j, value, tol: vtol } => {
            let r = ctx.pipeline()?.rank_one.as_ref().ok_or("no rank-one point")?;
            within(r.x[*i] * r.x[*j], *value, *vtol)
        }
        Check::Eigenratio { at_least } => {
            let r = ctx.pipeline()?.rank_one.as_ref().ok_or("no rank-one point")?;
            (r.eigenratio >= *at_least, None, format!("ratio {}", r.eigenratio))
        }
        Check::RankOneResidual { at_most } => {
            let r = ctx.pipeline()?.rank_one.as_ref().ok_or("no rank-one point")?;
            let res = r.feas_residual.max(r.obj_gap.abs());
            (res <= *at_most, Some(at_most - res), format!("residual {res}"))
        }
        Check::OracleAgreement { samples, rel_tol } => {
            let v = ctx.pipeline()?;
            let o = solve_sphere(&ctx.case.problem, *samples, ctx.cfg.seed).map_err(err)?;
            let bound = rel_tol * (1.0 + o.value.abs());
            let dev = (v.sdp_value - o.value).abs();
            (
                dev <= bound && v.sdp_value <= o.value + 1e-9,
                Some(bound - dev),
                format!("sdp {} oracle {}", v.sdp_value, o.value),
            )
        }
        Check::TransformedConditionB { status } => {
            let l = ctx.case.problem.congruence.as_ref().ok_or("no congruence")?;
            let lm = Mat::from_rows(l);
            let members = ctx.set().members.iter().map(|b| b.congruence(&lm)).collect();
            let s = ConstraintSet::new(lm.cols(), members).map_err(err)?;
            eq_status(check_condition_b(&s, tol).map_err(err)?.status, *status)
        }
        Check::CongruencePreimage { tol: ctol } => {
            let v = ctx.pipeline()?;
            let l = ctx.case.problem.congruence.as_ref().ok_or("no congruence")?;
            let (x, y) = match (&v.lifted_x, &v.congruence_preimage) {
                (Some(x), Some(y)) => (x, y),
                _ => return Ok((false, None, "no preimage reported".into())),
            };
            let ly = Mat::from_rows(l).matvec(y);
            let dev = ly.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (dev <= *ctol, Some(ctol - dev), format!("‖Ly − x‖∞ = {dev}"))
        }
        Check::Monotone { radius, step, bounds } => {
            let mut values = Vec::new();
            for b in bounds {
                let s = ball_lattice(*radius, *step, *b).map_err(err)?;
                let p = GeoCop::new(ctx.case.problem.q.clone(), ctx.case.problem.h.clone(), s)
                    .map_err(err)?;
                let sol = solve_relaxation(&p, &ctx.cfg.solver).map_err(err)?;
                if sol.status != SdpStatus::Optimal {
                    return Ok((false, None, format!("solve at bound {b}: {:?}", sol.status)));
                }
                values.push(sol.value);
            }
            let slack = values
                .windows(2)
                .map(|w| w[1] - w[0] + 1e-8 * (1.0 + w[0].abs()))
                .fold(f64::INFINITY, f64::min);
            (slack >= 0.0, Some(slack), format!("values {values:?}"))
        }
        Check::TauSearch { lambda, ell, sigma, start, expected } => {
            let base = generalized_hyperbola_matrix(lambda, *ell, *sigma).map_err(err)?;
            let mut tau = *start;
            let mut found = None;
            let mut trail = Vec::new();
            for _ in 0..12 {
                let other = generalized_hyperbola_matrix(lambda, *ell, tau).map_err(err)?;
                let s = ConstraintSet::new(lambda.len(), vec![base.clone(), other]).map_err(err)?;
                let r = check_bprime_cprime(&s, tol).map_err(err)?;
                trail.push((tau, r.b_prime, r.c_prime));
                if r.b_prime == PairStatus::Certified && r.c_prime == Tri::Yes {
                    found = Some(tau);
                    break;
                }
                tau *= 2.0;
            }
            (found == Some(*expected), None, format!("trail {trail:?}"))
        }
        Check::GrayFraction { bx, resolution, value, rel_tol } => {
            let r = rasterize(ctx.set(), *bx, *resolution).map_err(err)?;
            let f = r.gray_fraction();
            let region = solve_region_2d(ctx.set(), &ctx.case.problem.q, *bx, *resolution).map_err(err)?;
            let bound = rel_tol * value;
            let dev = (f - value).abs();
            (
                dev <= bound && region.feasible_fraction == f,
                Some(bound - dev),
                format!("plot {f}, region oracle {}, analytic {value}", region.feasible_fraction),
            )
        }
        Check::PlotSign { bx, resolution } => {
            let r = rasterize(ctx.set(), *bx, *resolution).map_err(err)?;
            let bad = sign_mismatches(ctx.set(), *bx, *resolution, &to_ppm(&r)).map_err(err)?;
            (bad == 0, Some(-(bad as f64)), format!("{bad} of {} pixels disagree", resolution * resolution))
        }
    })
}

fn check_name(c: &Check) -> String {
    let v = serde_json::to_value(c).expect("checks serialize");
    v.get("check")
        .and_then(|s| s.as_str())
        .unwrap_or("check")
        .to_string()
}

pub fn run_case(case: &GalleryCase, cfg: &PipelineConfig) -> CaseReport {
    let t0 = Instant::now();
    let ctx = Ctx {
        case,
        cfg: *cfg,
        pipeline: OnceCell::new(),
    };
    let checks: Vec<CheckResult> = case
        .expected
        .iter()
        .map(|x| {
            let (passed, margin, detail) = match evaluate(&ctx, &x.check) {
                Ok(o) => o,
                Err(msg) => (false, None, format!("error: {msg}")),
            };
            CheckResult {
                name: check_name(&x.check),
                provenance: x.provenance,
                passed,
                margin,
                detail,
            }
        })
        .collect();
    // Every case must also get through the pipeline without stage errors.
    let error = ctx.pipeline().err();
    CaseReport {
        id: case.id.to_string(),
        passed: error.is_none() && checks.iter().all(|c| c.passed),
        skipped: false,
        seconds: t0.elapsed().as_secs_f64(),
        error,
        checks,
    }
}

/// Runs the named cases in order; cases that start after `budget` has been
/// spent are reported as skipped.
pub fn run_acceptance(ids: &[&str], budget: Duration) -> AcceptanceReport {
    let cfg = PipelineConfig::with_tol(DEFAULT_TOL);
    let t0 = Instant::now();
    let mut cases = Vec::new();
    for id in ids {
        if t0.elapsed() > budget {
            cases.push(CaseReport {
                id: id.to_string(),
                passed: false,
                skipped: true,
                seconds: 0.0,
                error: Some("time budget exhausted".into()),
                checks: Vec::new(),
            });
            continue;
        }
        cases.push(match build_case(id) {
            Ok(c) => run_case(&c, &cfg),
            Err(e) => CaseReport {
                id: id.to_string(),
                passed: false,
                skipped: false,
                seconds: 0.0,
                error: Some(e.to_string()),
                checks: Vec::new(),
            },
        });
    }
    let passed = cases.iter().filter(|c| c.passed).count();
    let skipped = cases.iter().filter(|c| c.skipped).count();
    AcceptanceReport {
        failed: cases.len() - passed - skipped,
        passed,
        skipped,
        cases,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_id_builds() {
        for id in list_ids() {
            let c = build_case(id).unwrap();
            assert_eq!(c.id, *id);
            assert!(!c.expected.is_empty());
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(matches!(build_case("ex9.9"), Err(Error::UnknownCase(_))));
        assert!(matches!(build_case("fig1-combo-B1B4"), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn displayed_entries_are_exact() {
        let c = build_case("ex6.1").unwrap();
        let s = &c.problem.bset;
        assert_eq!(s.members[0].get(0, 0), 2.0);
        assert_eq!(s.members[0].get(0, 1), 1.0);
        assert_eq!(s.members[1].get(0, 3), -1.0);
        assert_eq!(s.members[2].get(2, 2), -3.0);
    }

    #[test]
    fn figure_two_has_ten_members() {
        let s = figure_two_set();
        assert_eq!(s.len(), 10);
        // The outer member is nonnegative inside the radius-2 disk.
        assert!(eval_quadratic(&[1.9, 0.0], 1.0, &s.members[9]).unwrap() > 0.0);
        assert!(eval_quadratic(&[2.1, 0.0], 1.0, &s.members[9]).unwrap() < 0.0);
    }

    #[test]
    fn fig1_combos_use_the_listed_forms() {
        let c = build_case("fig1-combo-B1B6").unwrap();
        assert_eq!(c.problem.bset.members[0], SymMat::diag(&[1.0, 1.0, -0.5]));
        assert_eq!(c.problem.bset.members[1], SymMat::diag(&[-1.0, -1.0, 1.0]));
        let c = build_case("fig1-combo-B1B6-r1").unwrap();
        assert_eq!(c.problem.bset.members[0], SymMat::diag(&[1.0, 1.0, -1.0]));
    }
}
