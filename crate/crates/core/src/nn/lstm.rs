use super::{init::uniform_fan_in, view1, view2, Param, Parameterized};
use ndarray::{Array2, Array3, ArrayD, Axis};
use rand::Rng;

/// Single LSTM layer returning the full hidden sequence, with exact
/// backpropagation through time.
///
/// Gate blocks are laid out `[input, forget, cell, output]` along the 4H
/// axis. Initial hidden and cell states are zero. All weights initialize
/// uniformly in ±1/sqrt(hidden).
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    d_in: usize,
    hidden: usize,
    cache: Option<Vec<StepCache>>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_ih: Param::new(
                format!("{name}.w_ih"),
                uniform_fan_in(rng, &[d_in, 4 * hidden], hidden),
            ),
            w_hh: Param::new(
                format!("{name}.w_hh"),
                uniform_fan_in(rng, &[hidden, 4 * hidden], hidden),
            ),
            bias: Param::new(
                format!("{name}.bias"),
                uniform_fan_in(rng, &[4 * hidden], hidden),
            ),
            d_in,
            hidden,
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `[batch, time, d_in]` to `[batch, time, hidden]`.
    pub fn forward(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (b, t, d_in) = x.dim();
        assert_eq!(d_in, self.d_in, "lstm input width");
        let h = self.hidden;
        let w_ih = view2(&self.w_ih.w);
        let w_hh = view2(&self.w_hh.w);
        let bias = view1(&self.bias.w);

        let mut h_prev = Array2::<f64>::zeros((b, h));
        let mut c_prev = Array2::<f64>::zeros((b, h));
        let mut out = Array3::<f64>::zeros((b, t, h));
        let mut steps = Vec::with_capacity(t);

        for ti in 0..t {
            let x_t = x.index_axis(Axis(1), ti).to_owned();
            let mut z = x_t.dot(&w_ih) + h_prev.dot(&w_hh);
            z += &bias;
            let i = z.slice(ndarray::s![.., 0..h]).mapv(sigmoid);
            let f = z.slice(ndarray::s![.., h..2 * h]).mapv(sigmoid);
            let g = z.slice(ndarray::s![.., 2 * h..3 * h]).mapv(f64::tanh);
            let o = z.slice(ndarray::s![.., 3 * h..4 * h]).mapv(sigmoid);
            let c = &f * &c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h_t = &o * &tanh_c;
            out.index_axis_mut(Axis(1), ti).assign(&h_t);
            steps.push(StepCache {
                x: x_t,
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                i,
                f,
                g,
                o,
                tanh_c,
            });
            h_prev = h_t;
            c_prev = c;
        }
        self.cache = Some(steps);
        out
    }

    pub fn backward(&mut self, d_out: &Array3<f64>) -> Array3<f64> {
        let steps = self.cache.as_ref().expect("forward before backward");
        let (b, t, h) = d_out.dim();
        let w_ih = view2(&self.w_ih.w).to_owned();
        let w_hh = view2(&self.w_hh.w).to_owned();

        let mut dw_ih = Array2::<f64>::zeros((self.d_in, 4 * h));
        let mut dw_hh = Array2::<f64>::zeros((h, 4 * h));
        let mut db = ndarray::Array1::<f64>::zeros(4 * h);
        let mut dx = Array3::<f64>::zeros((b, t, self.d_in));
        let mut dh_next = Array2::<f64>::zeros((b, h));
        let mut dc_next = Array2::<f64>::zeros((b, h));

        for ti in (0..t).rev() {
            let s = &steps[ti];
            let dh = &d_out.index_axis(Axis(1), ti).to_owned() + &dh_next;
            let d_o = &dh * &s.tanh_c;
            let dc = &dh * &s.o * s.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;
            let d_i = &dc * &s.g;
            let d_f = &dc * &s.c_prev;
            let d_g = &dc * &s.i;

            let mut dz = Array2::<f64>::zeros((b, 4 * h));
            dz.slice_mut(ndarray::s![.., 0..h])
                .assign(&(&d_i * &s.i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(ndarray::s![.., h..2 * h])
                .assign(&(&d_f * &s.f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(ndarray::s![.., 2 * h..3 * h])
                .assign(&(&d_g * &s.g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(ndarray::s![.., 3 * h..4 * h])
                .assign(&(&d_o * &s.o.mapv(|v| v * (1.0 - v))));

            dw_ih += &s.x.t().dot(&dz);
            dw_hh += &s.h_prev.t().dot(&dz);
            db += &dz.sum_axis(Axis(0));
            dx.index_axis_mut(Axis(1), ti).assign(&dz.dot(&w_ih.t()));
            dh_next = dz.dot(&w_hh.t());
            dc_next = &dc * &s.f;
        }

        self.w_ih.g += &dw_ih.into_dyn();
        self.w_hh.g += &dw_hh.into_dyn();
        let db: ArrayD<f64> = db.into_dyn();
        self.bias.g += &db;
        dx
    }
}

impl Parameterized for Lstm {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w_ih);
        f(&mut self.w_hh);
        f(&mut self.bias);
    }
}
