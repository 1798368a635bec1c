use crate::diff::Tensor;
use crate::error::{Error, Result};

/// A `rows × cols` block of reals; unlike [`Tensor`] it may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape("block", &[rows, cols], &[data.len()]));
        }
        Ok(Block { rows, cols, data })
    }

    pub fn empty(cols: usize) -> Self {
        Block {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape("block rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Ok(Block {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(vec![self.rows, self.cols], self.data.clone())
    }
}

/// One loss window: `history` holds `y_{t−H} … y_{t−1}`, `future` holds
/// `y_t … y_{t+H_p−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub history: Block,
    pub future: Block,
}

/// Every window of a contiguous series, in order of start index.
pub fn windows<R: AsRef<[f64]>>(series: &[R], history: usize, horizon: usize) -> Result<Vec<WindowSample>> {
    let span = history + horizon;
    if series.len() < span {
        return Err(Error::Sizing {
            what: "window extraction".into(),
            required: span,
            available: series.len(),
        });
    }
    (history..=series.len() - horizon)
        .map(|t| {
            Ok(WindowSample {
                history: Block::from_rows(&series[t - history..t])?,
                future: Block::from_rows(&series[t..t + horizon])?,
            })
        })
        .collect()
}

/// Windows stacked column-wise for a batched forward pass.
///
/// `history` is `(H·n_y) × N` with each column the time-major flattening of
/// one sample's history; `futures[k]` is the `n_y × N` matrix of targets
/// `y_{t+k}`.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub history: Tensor,
    pub futures: Vec<Tensor>,
    pub ones: Tensor,
}

impl WindowBatch {
    pub fn new(samples: &[WindowSample]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("window batch"))?;
        let n = samples.len();
        let (h, ny) = (first.history.rows, first.history.cols);
        let hp = first.future.rows;
        if h == 0 || hp == 0 || ny == 0 {
            return Err(Error::Empty("window"));
        }
        let hist_len = h * ny;
        let mut history = vec![0.0; hist_len * n];
        let mut futures = vec![vec![0.0; ny * n]; hp];
        for (j, s) in samples.iter().enumerate() {
            if (s.history.rows, s.history.cols, s.future.rows, s.future.cols) != (h, ny, hp, ny) {
                return Err(Error::shape(
                    "window batch",
                    &[h, ny, hp, ny],
                    &[s.history.rows, s.history.cols, s.future.rows, s.future.cols],
                ));
            }
            for (i, &v) in s.history.data.iter().enumerate() {
                history[i * n + j] = v;
            }
            for (k, fut) in futures.iter_mut().enumerate() {
                for c in 0..ny {
                    fut[c * n + j] = s.future.data[k * ny + c];
                }
            }
        }
        Ok(WindowBatch {
            history: Tensor::new(vec![hist_len, n], history)?,
            futures: futures
                .into_iter()
                .map(|f| Tensor::new(vec![ny, n], f))
                .collect::<Result<_>>()?,
            ones: Tensor::full(&[1, n], 1.0),
        })
    }

    pub fn len(&self) -> usize {
        self.ones.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> usize {
        self.futures.len()
    }
}
