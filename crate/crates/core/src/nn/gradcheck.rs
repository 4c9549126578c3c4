use super::Parameterized;
use rand::Rng;

/// One sampled coordinate comparison between analytic and central finite
/// difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub results: Vec<GradCheckResult>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.results.iter().map(|r| r.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckResult> {
        self.results
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compares the analytic gradients already accumulated in the network
/// against central finite differences of `loss_fn` at `n_samples` uniformly
/// sampled trainable coordinates.
///
/// The caller must have run one forward/backward of the same loss so that
/// each `Param::g` holds the analytic gradient. `loss_fn` must recompute the
/// full forward loss from scratch on every call and must not mutate grads it
/// later reads (it may overwrite caches freely).
pub fn check_gradients<N: Parameterized>(
    net: &mut N,
    mut loss_fn: impl FnMut(&mut N) -> f64,
    n_samples: usize,
    h: f64,
    rng: &mut impl Rng,
) -> GradCheckReport {
    let mut sizes: Vec<(String, usize)> = Vec::new();
    net.visit_params(&mut |p| {
        if p.trainable {
            sizes.push((p.name.clone(), p.len()));
        }
    });
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    assert!(total > 0, "no trainable parameters");

    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut flat = rng.gen_range(0..total);
        let mut which = 0;
        while flat >= sizes[which].1 {
            flat -= sizes[which].1;
            which += 1;
        }
        picks.push((which, flat));
    }

    let mut report = GradCheckReport::default();
    for (which, elem) in picks {
        let analytic = read_grad(net, which, elem);
        poke(net, which, elem, h);
        let lp = loss_fn(net);
        poke(net, which, elem, -2.0 * h);
        let lm = loss_fn(net);
        poke(net, which, elem, h);
        let numeric = (lp - lm) / (2.0 * h);
        let rel_err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        report.results.push(GradCheckResult {
            param: sizes[which].0.clone(),
            index: elem,
            analytic,
            numeric,
            rel_err,
        });
    }
    report
}

fn poke<N: Parameterized>(net: &mut N, which: usize, elem: usize, delta: f64) {
    let mut i = 0;
    net.visit_params(&mut |p| {
        if p.trainable {
            if i == which {
                p.w.as_slice_mut().expect("contiguous param")[elem] += delta;
            }
            i += 1;
        }
    });
}

fn read_grad<N: Parameterized>(net: &mut N, which: usize, elem: usize) -> f64 {
    let mut i = 0;
    let mut out = 0.0;
    net.visit_params(&mut |p| {
        if p.trainable {
            if i == which {
                out = p.g.as_slice().expect("contiguous grad")[elem];
            }
            i += 1;
        }
    });
    out
}
