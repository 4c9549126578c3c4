use super::{init::uniform_fan_in, view1, view2, Param, Parameterized};
use ndarray::{Array2, Array3, Axis};
use rand::Rng;

/// Multi-head scaled dot-product self-attention over `[batch, time, d]`.
#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    pub w_q: Param,
    pub b_q: Param,
    pub w_k: Param,
    pub b_k: Param,
    pub w_v: Param,
    pub b_v: Param,
    pub w_o: Param,
    pub b_o: Param,
    d: usize,
    heads: usize,
    cache: Option<AttnCache>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    x2: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    o_cat: Array2<f64>,
    b: usize,
    t: usize,
}

fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl MultiHeadSelfAttention {
    pub fn new(name: &str, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert_eq!(d % heads, 0, "d must divide evenly into heads");
        let mk_w = |rng: &mut _, suffix: &str| {
            Param::new(format!("{name}.{suffix}"), uniform_fan_in(rng, &[d, d], d))
        };
        let mk_b = |rng: &mut _, suffix: &str| {
            Param::new(format!("{name}.{suffix}"), uniform_fan_in(rng, &[d], d))
        };
        Self {
            w_q: mk_w(rng, "w_q"),
            b_q: mk_b(rng, "b_q"),
            w_k: mk_w(rng, "w_k"),
            b_k: mk_b(rng, "b_k"),
            w_v: mk_w(rng, "w_v"),
            b_v: mk_b(rng, "b_v"),
            w_o: mk_w(rng, "w_o"),
            b_o: mk_b(rng, "b_o"),
            d,
            heads,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, d) = x.dim();
        assert_eq!(d, self.d, "attention width");
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let x2 = x
            .to_shape((b * t, d))
            .expect("contiguous input")
            .to_owned();
        let mut q = x2.dot(&view2(&self.w_q.w));
        q += &view1(&self.b_q.w);
        let mut k = x2.dot(&view2(&self.w_k.w));
        k += &view1(&self.b_k.w);
        let mut v = x2.dot(&view2(&self.w_v.w));
        v += &view1(&self.b_v.w);

        let mut o_cat = Array2::<f64>::zeros((b * t, d));
        let mut attn = Vec::with_capacity(b * self.heads);
        for bi in 0..b {
            let rows = bi * t..(bi + 1) * t;
            for hi in 0..self.heads {
                let cols = hi * dh..(hi + 1) * dh;
                let qh = q.slice(ndarray::s![rows.clone(), cols.clone()]);
                let kh = k.slice(ndarray::s![rows.clone(), cols.clone()]);
                let vh = v.slice(ndarray::s![rows.clone(), cols.clone()]);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                softmax_rows_inplace(&mut scores);
                let oh = scores.dot(&vh);
                o_cat
                    .slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&oh);
                attn.push(scores);
            }
        }

        let mut y2 = o_cat.dot(&view2(&self.w_o.w));
        y2 += &view1(&self.b_o.w);
        let y = y2
            .to_shape((b, t, d))
            .expect("reshape output")
            .to_owned();
        self.cache = Some(AttnCache {
            x2,
            q,
            k,
            v,
            attn,
            o_cat,
            b,
            t,
        });
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let (b, t, d) = (cache.b, cache.t, self.d);
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dy2 = dy
            .to_shape((b * t, d))
            .expect("contiguous grad")
            .to_owned();

        self.w_o.g += &cache.o_cat.t().dot(&dy2).into_dyn();
        self.b_o.g += &dy2.sum_axis(Axis(0)).into_dyn();
        let d_ocat = dy2.dot(&view2(&self.w_o.w).t());

        let mut dq = Array2::<f64>::zeros((b * t, d));
        let mut dk = Array2::<f64>::zeros((b * t, d));
        let mut dv = Array2::<f64>::zeros((b * t, d));
        for bi in 0..b {
            let rows = bi * t..(bi + 1) * t;
            for hi in 0..self.heads {
                let cols = hi * dh..(hi + 1) * dh;
                let p = &cache.attn[bi * self.heads + hi];
                let doh = d_ocat.slice(ndarray::s![rows.clone(), cols.clone()]);
                let qh = cache.q.slice(ndarray::s![rows.clone(), cols.clone()]);
                let kh = cache.k.slice(ndarray::s![rows.clone(), cols.clone()]);
                let vh = cache.v.slice(ndarray::s![rows.clone(), cols.clone()]);

                let dp = doh.dot(&vh.t());
                dv.slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&p.t().dot(&doh));

                // Softmax backward per row: p ⊙ (dp − (dp·p) 1ᵀ).
                let mut ds = Array2::<f64>::zeros((t, t));
                for r in 0..t {
                    let dot: f64 = (0..t).map(|c| dp[(r, c)] * p[(r, c)]).sum();
                    for c in 0..t {
                        ds[(r, c)] = p[(r, c)] * (dp[(r, c)] - dot);
                    }
                }
                ds *= scale;
                dq.slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&ds.dot(&kh));
                dk.slice_mut(ndarray::s![rows.clone(), cols.clone()])
                    .assign(&ds.t().dot(&qh));
            }
        }

        self.w_q.g += &cache.x2.t().dot(&dq).into_dyn();
        self.b_q.g += &dq.sum_axis(Axis(0)).into_dyn();
        self.w_k.g += &cache.x2.t().dot(&dk).into_dyn();
        self.b_k.g += &dk.sum_axis(Axis(0)).into_dyn();
        self.w_v.g += &cache.x2.t().dot(&dv).into_dyn();
        self.b_v.g += &dv.sum_axis(Axis(0)).into_dyn();

        let dx2 = dq.dot(&view2(&self.w_q.w).t())
            + dk.dot(&view2(&self.w_k.w).t())
            + dv.dot(&view2(&self.w_v.w).t());
        dx2.to_shape((b, t, d)).expect("reshape grad").to_owned()
    }
}

impl Parameterized for MultiHeadSelfAttention {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w_q);
        f(&mut self.b_q);
        f(&mut self.w_k);
        f(&mut self.b_k);
        f(&mut self.w_v);
        f(&mut self.b_v);
        f(&mut self.w_o);
        f(&mut self.b_o);
    }
}
