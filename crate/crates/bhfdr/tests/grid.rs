use std::path::PathBuf;

use bhfdr::analytic::{power_report, reduced_fdr_design, ReportOptions, DEFAULT_N_MAX};
use bhfdr::grid::{
    compare_report, evaluate_row, expand_grid, field_value, read_jsonl, rows_for_reference, run_grid, write_jsonl,
    GridConfig, GridPoint, ReferenceTable, Tolerance, Tolerances, Values,
};
use bhfdr::montecarlo::{run_sim, SimConfig};
use bhfdr::{DesignPoint, Error};

fn workspace_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("grid-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL: &str = r#"
m = [200, 1000]
expected_m = [5, 20]
f = [0.15]
theta = { lo = 0.6, hi = 1.0, step = 0.2 }
n = [30, 70]

[sim]
reps = 50
seed = 17
"#;

fn with_output(toml: &str, path: &std::path::Path, format: &str) -> GridConfig {
    let text = format!("{toml}\n[output]\npath = {:?}\nformat = \"{format}\"\n", path.display().to_string());
    GridConfig::from_toml_str(&text).unwrap()
}

#[test]
fn values_ranges_expand_without_drift() {
    let v = Values::Range { lo: 0.6, hi: 1.5, step: 0.1 }.expand().unwrap();
    assert_eq!(v.len(), 10);
    assert!((v[9] - 1.5).abs() < 1e-12);
    assert_eq!(Values::List(vec![3.0, 1.0]).expand().unwrap(), vec![3.0, 1.0]);
    assert!(Values::Range { lo: 1.0, hi: 0.0, step: 0.1 }.expand().is_err());
    assert!(Values::Range { lo: 0.0, hi: 1.0, step: 0.0 }.expand().is_err());
}

#[test]
fn config_validation() {
    let bad = [
        // both r and expected_m
        "m = [100]\nr = [0.1]\nexpected_m = [5]\nf = [0.1]\ntheta = [1.0]\nn = [10]",
        // no sizing
        "m = [100]\nr = [0.1]\nf = [0.1]\ntheta = [1.0]",
        // unknown key
        "m = [100]\nr = [0.1]\nf = [0.1]\ntheta = [1.0]\nn = [10]\nbogus = 1",
        // bad window
        "m = [100]\nr = [0.1]\nf = [0.1]\ntheta = [1.0]\n[power_window]\nlo = 0.9\nhi = 0.5\nstep = 5",
    ];
    for text in bad {
        assert!(matches!(GridConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
    }
    let cfg = GridConfig::from_toml_str("m = [100]\nr = [2.0]\nf = [0.1]\ntheta = [1.0]\nn = [10]").unwrap();
    assert!(expand_grid(&cfg).is_err());
}

#[test]
fn single_point_grid_matches_direct_calls() {
    let cfg = GridConfig::from_toml_str(
        "m = [200]\nexpected_m = [5]\nf = [0.15]\ntheta = [0.6]\nn = [70]\n[sim]\nreps = 200\nseed = 4",
    )
    .unwrap();
    let points = expand_grid(&cfg).unwrap();
    assert_eq!(points.len(), 1);
    let dp = DesignPoint::from_expected(200, 5.0, 0.15, 0.6, 70);
    assert_eq!(points[0].design, dp);
    let rows = run_grid(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let direct = power_report(&dp, &ReportOptions::default()).unwrap();
    assert_eq!(rows[0].report.as_ref().unwrap(), &direct);
    let sim = run_sim(&SimConfig::new(dp, 200, 4)).unwrap();
    assert_eq!(rows[0].sim.as_ref().unwrap(), &sim);
}

#[test]
fn fdf_study_config_has_324_points() {
    let cfg = GridConfig::from_toml_str(
        r#"
m = [1000, 2500, 5000, 7500, 10000, 20000]
r = [0.025, 0.05, 0.075]
f = [0.1, 0.15, 0.2]
theta = [0.6666666666666666, 0.8333333333333334, 1.0]
[fdf_bound]
target_power = [0.6, 0.8]
"#,
    )
    .unwrap();
    let points = expand_grid(&cfg).unwrap();
    assert_eq!(points.len(), 324);
    assert!(points.iter().all(|p| p.target_power.is_some()));
}

#[test]
fn fdf_row_matches_direct_sizing() {
    let cfg = GridConfig::from_toml_str(
        "m = [1000]\nr = [0.025]\nf = [0.15]\ntheta = [0.6666666666666666]\n[fdf_bound]\ntarget_power = [0.8]",
    )
    .unwrap();
    let points = expand_grid(&cfg).unwrap();
    let row = evaluate_row(&cfg, &points[0]);
    let direct = reduced_fdr_design(&points[0].design, 0.8, 0.9, DEFAULT_N_MAX).unwrap();
    assert_eq!(row.fdf, Some(direct));
    assert_eq!(row.design.n, direct.n11);
    assert_eq!(field_value(&row, "n00").unwrap(), Some(direct.n00 as f64));
}

#[test]
fn biomarker_config_size_is_near_published_count() {
    let cfg = GridConfig::from_file(&workspace_path("configs/biomarker.toml")).unwrap();
    let n = expand_grid(&cfg).unwrap().len();
    let published = 2648.0;
    assert!((n as f64 - published).abs() <= 0.25 * published, "{n} points vs {published} ± 25%");
}

#[test]
fn window_that_excludes_everything_is_an_empty_grid() {
    // The window [0.5, 0.51] holds no multiple of 1000.
    let cfg = GridConfig::from_toml_str(
        "m = [200]\nexpected_m = [5]\nf = [0.15]\ntheta = [0.6]\n[power_window]\nlo = 0.5\nhi = 0.51\nstep = 1000",
    )
    .unwrap();
    assert!(matches!(expand_grid(&cfg), Err(Error::EmptyGrid(_))));
}

#[test]
fn window_sizes_bracket_the_power_window() {
    let cfg = GridConfig::from_toml_str(
        "m = [200]\nexpected_m = [20]\nf = [0.1]\ntheta = [1.0]\nlower_bound = false\n[power_window]\nlo = 0.6\nhi = 0.95\nstep = 5",
    )
    .unwrap();
    let points = expand_grid(&cfg).unwrap();
    assert!(points.len() > 1);
    let rows: Vec<_> = points.iter().map(|p| evaluate_row(&cfg, p)).collect();
    for (p, row) in points.iter().zip(&rows) {
        assert_eq!(p.design.n % 5, 0);
        let pi = row.report.as_ref().unwrap().pi_pi;
        assert!((0.6..=0.95).contains(&pi), "n = {}: π = {pi}", p.design.n);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("rerun");
    let a = dir.join("a/out");
    let b = dir.join("b/out");
    run_grid(&with_output(SMALL, &a, "both")).unwrap();
    run_grid(&with_output(SMALL, &b, "both")).unwrap();
    for ext in ["csv", "jsonl"] {
        let x = std::fs::read(a.with_extension(ext)).unwrap();
        let y = std::fs::read(b.with_extension(ext)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{ext} differs");
    }
}

#[test]
fn interrupted_run_resumes() {
    for format in ["both", "csv"] {
        let dir = scratch(&format!("resume-{format}"));
        let full = dir.join("full/out");
        let part = dir.join("part/out");
        let cfg_full = with_output(SMALL, &full, format);
        let all = run_grid(&cfg_full).unwrap();
        assert_eq!(all.len(), 24);

        // Simulate an interruption: keep the header plus the first three rows.
        let cfg_part = with_output(SMALL, &part, format);
        std::fs::create_dir_all(part.parent().unwrap()).unwrap();
        let csv = std::fs::read_to_string(full.with_extension("csv")).unwrap();
        let head: Vec<&str> = csv.lines().take(4).collect();
        // The torn last line still carries complete key columns.
        std::fs::write(part.with_extension("csv"), head.join("\n") + "\n200,0.025,5,0.15,0.8,70,folded_t,0.01").unwrap();
        if format == "both" {
            let jsonl = std::fs::read_to_string(full.with_extension("jsonl")).unwrap();
            let head: Vec<&str> = jsonl.lines().take(3).collect();
            // A torn trailing line is tolerated.
            std::fs::write(part.with_extension("jsonl"), head.join("\n") + "\n{\"design\":").unwrap();
        }
        let rest = run_grid(&cfg_part).unwrap();
        assert_eq!(rest.len(), 21, "{format}");
        assert_eq!(&rest[..], &all[3..]);
        let rerun = run_grid(&cfg_part).unwrap();
        assert!(rerun.is_empty());
        assert_eq!(
            std::fs::read_to_string(part.with_extension("csv")).unwrap(),
            std::fs::read_to_string(full.with_extension("csv")).unwrap()
        );
    }
}

#[test]
fn jsonl_round_trip_is_lossless() {
    let cfg = GridConfig::from_toml_str(SMALL).unwrap();
    let rows = run_grid(&cfg).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &rows).unwrap();
    let back = read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, rows);
    assert!(matches!(read_jsonl(&b"{not json}\n"[..]), Err(Error::Schema(_))));
}

#[test]
fn permuting_grid_order_permutes_rows() {
    let cfg = GridConfig::from_toml_str(SMALL).unwrap();
    let points = expand_grid(&cfg).unwrap();
    let forward: Vec<_> = points.iter().map(|p| evaluate_row(&cfg, p)).collect();
    let mut reversed: Vec<GridPoint> = points.clone();
    reversed.reverse();
    let backward: Vec<_> = reversed.iter().map(|p| evaluate_row(&cfg, p)).collect();
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a, b);
    }
}

fn self_reference(rows: &[bhfdr::grid::ResultRow]) -> ReferenceTable {
    let mut text = String::from("source,m,r,f,theta,n,pi_pi,pi_oracle,lambda_power_0.75,sim_mean_tpf\n");
    for (i, row) in rows.iter().enumerate() {
        let d = row.design;
        let v = |name: &str| field_value(row, name).unwrap().map(|x| format!("{x:?}")).unwrap_or_default();
        text += &format!(
            "self:{i},{},{:?},{:?},{:?},{},{},{},{},{}\n",
            d.m,
            d.r,
            d.f,
            d.theta,
            d.n,
            v("pi_pi"),
            v("pi_oracle"),
            v("lambda_power_0.75"),
            v("sim_mean_tpf")
        );
    }
    ReferenceTable::from_reader(text.as_bytes()).unwrap()
}

#[test]
fn rows_compared_with_themselves_agree() {
    let cfg = GridConfig::from_toml_str(SMALL).unwrap();
    let rows = run_grid(&cfg).unwrap();
    let table = self_reference(&rows);
    let report = compare_report(&rows, &table, &Tolerances::new(Tolerance::Abs(0.0)), &[]).unwrap();
    assert_eq!(report.n_cells, 24 * 4);
    assert_eq!(report.n_flagged, 0);
    assert_eq!(report.max_abs_diff, 0.0);

    // Perturbing one reference cell flags exactly that cell.
    let mut table = table;
    let col = table.headers.iter().position(|h| h == "pi_pi").unwrap();
    table.records[2][col] = "0.5".into();
    let report = compare_report(&rows, &table, &Tolerances::new(Tolerance::Abs(1e-12)), &[]).unwrap();
    assert_eq!(report.n_flagged, 1);
    assert_eq!(report.flagged().next().unwrap().source, "self:2");
}

#[test]
fn compare_rejects_schema_mismatches() {
    let cfg = GridConfig::from_toml_str(SMALL).unwrap();
    let rows = run_grid(&cfg).unwrap();
    let tol = Tolerances::new(Tolerance::Abs(1e-3));
    let unknown = ReferenceTable::from_reader(&b"source,m,r,f,theta,n,mystery\nx,200,0.025,0.15,0.6,30,1\n"[..]).unwrap();
    assert!(matches!(compare_report(&rows, &unknown, &tol, &[]), Err(Error::Schema(_))));
    let unmatched = ReferenceTable::from_reader(&b"source,m,r,f,theta,n,pi_pi\nx,999,0.025,0.15,0.6,30,1\n"[..]).unwrap();
    assert!(matches!(compare_report(&rows, &unmatched, &tol, &[]), Err(Error::Schema(_))));
    assert!(ReferenceTable::from_reader(&b"m,n\n1,2\n"[..]).is_err());
}

#[test]
fn plug_in_power_matches_published_biomarker_table() {
    let table = ReferenceTable::from_path(&workspace_path("data/reference/biomarker_avgpwr.csv")).unwrap();
    assert_eq!(table.records.len(), 28);
    let rows = rows_for_reference(&table, &[0.75, 0.9], false).unwrap();
    let report = compare_report(&rows, &table, &Tolerances::new(Tolerance::Abs(5e-4)), &["pi_pi"]).unwrap();
    assert_eq!(report.n_cells, 28);
    assert!(report.pass, "{:?}", report.flagged().collect::<Vec<_>>());
}
