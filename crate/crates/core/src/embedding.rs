//! Per-timestep input embeddings.
//!
//! The integrated embedding sums a linear projection of `[statistics ‖ numeric
//! knowledge]`, one lookup per id column and a learned position row; masked
//! positions contribute the learnable mask token instead of statistics. The
//! knowledge embedding has its own parameters and never sees statistics.

use rand::Rng;

use crate::data::{FeatureSchema, Window};
use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::params::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Standard deviation of the normal initialization of tables and projections.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
struct Tables {
    numeric_w: Option<ParamId>,
    numeric_b: ParamId,
    ids: Vec<ParamId>,
    pos: ParamId,
    future_neutral: Option<ParamId>,
}

impl Tables {
    #[allow(clippy::too_many_arguments)]
    fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        prefix: &str,
        n_numeric: usize,
        schema: &FeatureSchema,
        d_x: usize,
        hide_future: bool,
        rng: &mut R,
    ) -> Self {
        let numeric_w = (n_numeric > 0).then(|| {
            store.normal(
                format!("{prefix}.numeric.W"),
                &[n_numeric, d_x],
                INIT_STD,
                rng,
            )
        });
        let numeric_b = store.zeros(format!("{prefix}.numeric.b"), &[d_x]);
        let know = schema.knowledge_columns();
        let ids = schema
            .knowledge_id_positions()
            .into_iter()
            .map(|c| {
                let col = know[c];
                store.normal(
                    format!("{prefix}.id.{}", col.name),
                    &[col.vocab_size.unwrap_or(1), d_x],
                    INIT_STD,
                    rng,
                )
            })
            .collect();
        let pos = store.normal(
            format!("{prefix}.pos"),
            &[schema.window_len(), d_x],
            INIT_STD,
            rng,
        );
        let future_neutral =
            hide_future.then(|| store.zeros(format!("{prefix}.future_neutral"), &[d_x]));
        Tables {
            numeric_w,
            numeric_b,
            ids,
            pos,
            future_neutral,
        }
    }

    /// numeric projection + bias + id lookups + position, then the neutral
    /// vector on hidden future rows.
    fn sum<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        numeric: Option<Tensor<F>>,
        window: &Window<F>,
        history_len: usize,
    ) -> Result<Var> {
        let hide = self.future_neutral.is_some();
        let mut x = match (self.numeric_w, numeric) {
            (Some(w), Some(n)) => {
                let n = tape.constant(n)?;
                tape.matmul(n, b.var(w))?
            }
            _ => {
                let s = window.len();
                let d = tape.value(b.var(self.numeric_b)).len();
                tape.constant(Tensor::zeros(&[s, d]))?
            }
        };
        x = tape.add_row(x, b.var(self.numeric_b))?;
        for (table, idx) in self.ids.iter().zip(&window.knowledge_ids) {
            let index = idx
                .iter()
                .enumerate()
                .map(|(t, &i)| (!(hide && t >= history_len)).then_some(i))
                .collect();
            let e = tape.gather_rows(b.var(*table), index)?;
            x = tape.add(x, e)?;
        }
        x = tape.add(x, b.var(self.pos))?;
        if let Some(u) = self.future_neutral {
            let mask = (0..window.len()).map(|t| t >= history_len).collect();
            x = tape.add_masked_row(x, b.var(u), mask)?;
        }
        Ok(x)
    }
}

/// Parameters of the integrated (statistics + knowledge) embedding.
#[derive(Debug, Clone)]
pub struct Embedding {
    tables: Tables,
    mask_token: ParamId,
    n_stat: usize,
    n_know_numeric: usize,
    history_len: usize,
    d_x: usize,
}

impl Embedding {
    /// Registers `emb.*` parameters. With `hide_future`, knowledge at t > T is
    /// replaced by the learned `emb.future_neutral` vector.
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        schema: &FeatureSchema,
        d_x: usize,
        hide_future: bool,
        rng: &mut R,
    ) -> Self {
        let n_stat = schema.statistic_columns().len();
        let n_know_numeric = schema.knowledge_numeric_positions().len();
        let tables = Tables::new(
            store,
            "emb",
            n_stat + n_know_numeric,
            schema,
            d_x,
            hide_future,
            rng,
        );
        let mask_token = store.zeros("emb.mask_token", &[d_x]);
        Embedding {
            tables,
            mask_token,
            n_stat,
            n_know_numeric,
            history_len: schema.history_len,
            d_x,
        }
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn mask_token(&self) -> ParamId {
        self.mask_token
    }

    /// `x`: (T+L) × d_x. Statistics at masked positions are dropped and the
    /// mask token is added in their place.
    pub fn embed<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        window: &Window<F>,
        plan: &MaskPlan,
    ) -> Result<Var> {
        check_window(window, self.history_len, plan)?;
        let s = window.len();
        let hide = self.tables.future_neutral.is_some();
        let width = self.n_stat + self.n_know_numeric;
        let mut numeric = vec![F::zero(); s * width];
        for t in 0..s {
            let row = &mut numeric[t * width..(t + 1) * width];
            if !plan.is_masked(t) {
                row[..self.n_stat].copy_from_slice(window.statistics.row(t));
            }
            if let Some(k) = &window.knowledge_numeric {
                if !(hide && t >= self.history_len) {
                    row[self.n_stat..].copy_from_slice(k.row(t));
                }
            }
        }
        let numeric = Tensor::new(&[s, width], numeric)?;
        let x = self
            .tables
            .sum(tape, b, Some(numeric), window, self.history_len)?;
        tape.add_masked_row(x, b.var(self.mask_token), plan.input_mask())
    }
}

/// Parameters of the knowledge-only embedding.
#[derive(Debug, Clone)]
pub struct KnowledgeEmbedding {
    tables: Tables,
    history_len: usize,
}

impl KnowledgeEmbedding {
    /// Registers `kemb.*` parameters.
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        schema: &FeatureSchema,
        d_x: usize,
        hide_future: bool,
        rng: &mut R,
    ) -> Self {
        let n = schema.knowledge_numeric_positions().len();
        KnowledgeEmbedding {
            tables: Tables::new(store, "kemb", n, schema, d_x, hide_future, rng),
            history_len: schema.history_len,
        }
    }

    /// `x̄`: (T+L) × d_x from knowledge columns and positions only.
    pub fn embed<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        window: &Window<F>,
    ) -> Result<Var> {
        if window.history_len != self.history_len {
            return Err(Error::Config(format!(
                "window history {} does not match model history {}",
                window.history_len, self.history_len
            )));
        }
        let mut numeric = window.knowledge_numeric.clone();
        if let (Some(n), true) = (numeric.as_mut(), self.tables.future_neutral.is_some()) {
            let from = self.history_len * n.cols();
            n.data_mut()[from..].fill(F::zero());
        }
        self.tables.sum(tape, b, numeric, window, self.history_len)
    }
}

fn check_window<F: Scalar>(window: &Window<F>, history_len: usize, plan: &MaskPlan) -> Result<()> {
    if window.history_len != history_len
        || plan.history_len() != history_len
        || plan.seq_len() != window.len()
    {
        return Err(Error::Config(format!(
            "mask plan ({}+{}) / window ({}+{}) do not match model history {history_len}",
            plan.history_len(),
            plan.horizon(),
            window.history_len,
            window.horizon
        )));
    }
    Ok(())
}
