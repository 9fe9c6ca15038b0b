//! Plot-script emitter: plain-text gnuplot commands referencing the run's
//! CSV files. No graphics are rendered here; the scripts are for human
//! inspection of the emitted data.

pub fn iterate_script() -> String {
    [
        "# gnuplot script: empirical trajectory vs theory envelope",
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 't (round)'",
        "set ylabel 'kappa'",
        "plot 'trajectory.csv' using 1:2 skip 1 with linespoints title 'empirical kappa_t', \\",
        "     'theory.csv' using 1:2 skip 1 with lines title 'envelope U + q^t (kappa_0 - U)'",
        "",
    ]
    .join("\n")
}

pub fn hard_instance_script() -> String {
    [
        "# gnuplot script: failure rate vs sample budget (log-log)",
        "set datafile separator ','",
        "set logscale xy",
        "set xlabel 'n (samples per round)'",
        "set ylabel 'failure rate'",
        "plot 'sweep.csv' using 1:2:3 skip 1 with yerrorlines title 'measured failure rate'",
        "",
    ]
    .join("\n")
}

pub fn spectral_script() -> String {
    [
        "# gnuplot script: effective dimension vs ridge parameter",
        "set datafile separator ','",
        "set logscale x",
        "set xlabel 'lambda'",
        "set ylabel 'd_eff'",
        "plot 'curve.csv' using 1:2 skip 1 with linespoints title 'd_eff(lambda)', \\",
        "     'curve.csv' using 1:3 skip 1 with lines title 'regime bound'",
        "",
    ]
    .join("\n")
}

pub fn dynamics_script() -> String {
    [
        "# gnuplot script: theory envelopes",
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 't (round)'",
        "set ylabel 'envelope'",
        "plot 'theory.csv' using 1:2 skip 1 with lines title 'kappa envelope', \\",
        "     'theory.csv' using 1:3 skip 1 with lines title 'failure envelope'",
        "",
    ]
    .join("\n")
}
