use crate::ensemble::{OutputLayout, SharedACEnsemble};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::tree::{fit_tree, TreeFitConfig};

/// The learner behind a training run: one shared ensemble, or separate actor
/// and critic ensembles fit on the same batches.
#[derive(Debug, Clone, PartialEq)]
pub enum ActorCritic {
    Shared(SharedACEnsemble),
    Separate {
        actor: SharedACEnsemble,
        critic: SharedACEnsemble,
    },
}

impl ActorCritic {
    /// Fresh model with θ₀ from `layout` and per-group rates.
    pub fn new(
        schema: FeatureSchema,
        layout: OutputLayout,
        shared: bool,
        rates: (f64, f64, f64),
        log_std_init: f64,
    ) -> Result<Self> {
        let (actor_lr, critic_lr, log_std_lr) = rates;
        let theta0 = layout.initial_theta_with(log_std_init);
        if shared {
            let lr = layout.rates(actor_lr, critic_lr, log_std_lr);
            return Ok(Self::Shared(SharedACEnsemble::new(schema, layout, theta0, lr)?));
        }
        let actor_layout = layout.without_value();
        let p = actor_layout.output_dim();
        let actor = SharedACEnsemble::new(
            schema.clone(),
            actor_layout,
            theta0[..p].to_vec(),
            actor_layout.rates(actor_lr, critic_lr, log_std_lr),
        )?;
        let critic = SharedACEnsemble::new(schema, OutputLayout::value_only(), vec![theta0[p]], vec![critic_lr])?;
        Ok(Self::Separate { actor, critic })
    }

    /// Layout of the combined θ (policy dims then value).
    pub fn layout(&self) -> OutputLayout {
        match self {
            Self::Shared(e) => e.layout(),
            Self::Separate { actor, .. } => OutputLayout {
                head: actor.layout().head,
                value: true,
            },
        }
    }

    pub fn predict_theta(&self, x: &FeatureVector) -> Vec<f64> {
        match self {
            Self::Shared(e) => e.predict_theta(x),
            Self::Separate { actor, critic } => {
                let mut theta = actor.predict_theta(x);
                theta.extend(critic.predict_theta(x));
                theta
            }
        }
    }

    pub fn predict_theta_batch(&self, xs: &[&FeatureVector]) -> Vec<Vec<f64>> {
        match self {
            Self::Shared(e) => e.predict_theta_batch(xs),
            Self::Separate { actor, critic } => actor
                .predict_theta_batch(xs)
                .into_iter()
                .zip(critic.predict_theta_batch(xs))
                .map(|(mut a, c)| {
                    a.extend(c);
                    a
                })
                .collect(),
        }
    }

    pub fn tree_count(&self) -> usize {
        match self {
            Self::Shared(e) => e.tree_count(),
            Self::Separate { actor, critic } => actor.tree_count() + critic.tree_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Self::Shared(e) => e.node_count(),
            Self::Separate { actor, critic } => actor.node_count() + critic.node_count(),
        }
    }

    pub fn set_schema(&mut self, schema: &FeatureSchema) {
        match self {
            Self::Shared(e) => e.set_schema(schema.clone()),
            Self::Separate { actor, critic } => {
                actor.set_schema(schema.clone());
                critic.set_schema(schema.clone());
            }
        }
    }

    /// Ensemble holding the policy head.
    pub fn policy_ensemble(&self) -> &SharedACEnsemble {
        match self {
            Self::Shared(e) => e,
            Self::Separate { actor, .. } => actor,
        }
    }

    /// One boosting iteration: fits tree(s) to the batch gradients (rows laid
    /// out like [`Self::layout`]) and appends them.
    pub fn boost(
        &mut self,
        schema: &FeatureSchema,
        inputs: &[&FeatureVector],
        grads: &[f64],
        fit: &TreeFitConfig,
        log_std_scale: f64,
    ) -> Result<()> {
        let d = self.layout().output_dim();
        if grads.len() != inputs.len() * d {
            return Err(Error::DimensionMismatch {
                expected: inputs.len() * d,
                actual: grads.len(),
            });
        }
        match self {
            Self::Shared(e) => {
                let cfg = TreeFitConfig { output_dim: d, ..*fit };
                let tree = fit_tree(schema, inputs, grads, &cfg)?;
                e.add_tree_scaled(tree, log_std_scale)
            }
            Self::Separate { actor, critic } => {
                let p = d - 1;
                let policy: Vec<f64> = grads.chunks_exact(d).flat_map(|r| r[..p].iter().copied()).collect();
                let value: Vec<f64> = grads.chunks_exact(d).map(|r| r[p]).collect();
                let actor_tree = fit_tree(schema, inputs, &policy, &TreeFitConfig { output_dim: p, ..*fit })?;
                let critic_tree = fit_tree(schema, inputs, &value, &TreeFitConfig { output_dim: 1, ..*fit })?;
                actor.add_tree_scaled(actor_tree, log_std_scale)?;
                critic.add_tree(critic_tree)
            }
        }
    }

    /// Adds the contribution of the most recent [`Self::boost`] to a cached θ.
    pub fn apply_last_boost(&self, x: &[f64], theta: &mut [f64]) {
        match self {
            Self::Shared(e) => e.accumulate_tree(e.tree_count() - 1, x, theta),
            Self::Separate { actor, critic } => {
                let p = actor.output_dim();
                let (policy, value) = theta.split_at_mut(p);
                actor.accumulate_tree(actor.tree_count() - 1, x, policy);
                critic.accumulate_tree(critic.tree_count() - 1, x, value);
            }
        }
    }
}
