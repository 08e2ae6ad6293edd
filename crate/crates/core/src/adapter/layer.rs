use super::ffn::{gelu, gelu_grad, FrozenFfn};
use super::{select_top_k, AdaptedFfn, AdapterConfig, GatingDecision, LoraExpert, RouterNetwork};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

/// Frozen FFN whose first projection is decorated by a routed mixture of
/// low-rank experts:
///
/// `y = W2 · gelu(W1·x + Σ_{i ∈ top-k} s_i · E_i(x))`
///
/// where `s` is the top-k renormalization of `softmax(W_gᵀ x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoralLayer {
    base: FrozenFfn,
    experts: Vec<LoraExpert>,
    router: RouterNetwork,
    top_k: usize,
}

/// Everything the backward pass needs from one token's forward pass.
#[derive(Debug, Clone)]
pub struct MoralCache {
    x: Vec<f64>,
    decision: GatingDecision,
    /// `(down · x, delta)` for each selected expert, aligned with `decision.selected`.
    expert_parts: Vec<(Vec<f64>, Vec<f64>)>,
    pre_activation: Vec<f64>,
}

impl MoralCache {
    pub fn decision(&self) -> &GatingDecision {
        &self.decision
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertGradients {
    pub down: Matrix,
    pub up: Matrix,
}

/// Gradients for every trainable tensor of a [`MoralLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct MoralGradients {
    pub experts: Vec<ExpertGradients>,
    pub router: Matrix,
}

impl MoralGradients {
    fn from_flat(mut flat: Vec<Matrix>) -> Self {
        let router = flat.pop().expect("router gradient");
        let mut experts = Vec::with_capacity(flat.len() / 2);
        let mut it = flat.into_iter();
        while let (Some(down), Some(up)) = (it.next(), it.next()) {
            experts.push(ExpertGradients { down, up });
        }
        MoralGradients { experts, router }
    }
}

impl MoralLayer {
    pub fn new(base: FrozenFfn, experts: Vec<LoraExpert>, router: RouterNetwork, top_k: usize) -> Result<Self> {
        let n = experts.len();
        if n == 0 {
            return Err(Error::Argument("a MoRAL layer needs at least one expert".into()));
        }
        if top_k == 0 || top_k > n {
            return Err(Error::Argument(format!("top_k must be in 1..={n}, got {top_k}")));
        }
        if router.n_experts() != n || router.d_m() != base.d_m() {
            return Err(Error::shape(
                "MoralLayer router",
                format!("{}×{}", base.d_m(), n),
                format!("{}×{}", router.d_m(), router.n_experts()),
            ));
        }
        for e in &experts {
            if e.d_in() != base.d_m() || e.d_out() != base.d_ff() {
                return Err(Error::shape(
                    "MoralLayer expert",
                    format!("{} -> {}", base.d_m(), base.d_ff()),
                    format!("{} -> {}", e.d_in(), e.d_out()),
                ));
            }
        }
        Ok(MoralLayer {
            base,
            experts,
            router,
            top_k,
        })
    }

    /// Fresh layer: zero-up experts and a uniformly initialized router.
    /// Every expert and the router draw from their own seeded stream, so the
    /// initialization of expert `i` does not depend on `n_experts`.
    pub fn initialized(base: FrozenFfn, cfg: &AdapterConfig, seed: u64, layer: usize) -> Result<Self> {
        cfg.validate()?;
        let experts = (0..cfg.n_experts)
            .map(|i| {
                let mut rng = rng::stream(seed, &[rng::EXPERT, layer as u64, i as u64]);
                LoraExpert::initialized(base.d_m(), base.d_ff(), cfg.rank, cfg.alpha, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = rng::stream(seed, &[rng::ROUTER, layer as u64]);
        let router = RouterNetwork::initialized(base.d_m(), cfg.n_experts, &mut rng)?;
        MoralLayer::new(base, experts, router, cfg.top_k)
    }

    pub fn experts(&self) -> &[LoraExpert] {
        &self.experts
    }

    pub fn experts_mut(&mut self) -> &mut [LoraExpert] {
        &mut self.experts
    }

    pub fn router(&self) -> &RouterNetwork {
        &self.router
    }

    pub fn router_mut(&mut self) -> &mut RouterNetwork {
        &mut self.router
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn route(&self, x: &[f64]) -> Result<GatingDecision> {
        select_top_k(&self.router.gate(x)?, self.top_k)
    }

    pub fn forward_with_cache(&self, x: &[f64]) -> Result<(Vec<f64>, MoralCache)> {
        if x.len() != self.base.d_m() {
            return Err(Error::shape("moral_forward", self.base.d_m(), x.len()));
        }
        let decision = self.route(x)?;
        let mut pre_activation = self.base.w1().matvec_unchecked(x);
        let mut expert_parts = Vec::with_capacity(decision.selected.len());
        for &(i, weight) in &decision.selected {
            let (hidden, delta) = self.experts[i].forward_parts(x);
            for (h, d) in pre_activation.iter_mut().zip(&delta) {
                *h += weight * d;
            }
            expert_parts.push((hidden, delta));
        }
        let activated: Vec<f64> = pre_activation.iter().map(|&h| gelu(h)).collect();
        let y = self.base.w2().matvec_unchecked(&activated);
        Ok((
            y,
            MoralCache {
                x: x.to_vec(),
                decision,
                expert_parts,
                pre_activation,
            },
        ))
    }

    /// Reverse-mode pass; accumulates into `grads` (ordered as
    /// [`AdaptedFfn::trainable`]) and returns the gradient on the input.
    fn accumulate(&self, cache: &MoralCache, grad_y: &[f64], grads: &mut [Matrix]) -> Result<Vec<f64>> {
        if grad_y.len() != self.base.d_m() {
            return Err(Error::shape("moral_gradients", self.base.d_m(), grad_y.len()));
        }
        let n = self.experts.len();
        if grads.len() != 2 * n + 1 {
            return Err(Error::shape("moral_gradients buffers", 2 * n + 1, grads.len()));
        }
        let x = &cache.x;
        let grad_act = self.base.w2().matvec_t_unchecked(grad_y);
        let grad_pre: Vec<f64> = grad_act
            .iter()
            .zip(&cache.pre_activation)
            .map(|(g, &h)| g * gelu_grad(h))
            .collect();

        let mut grad_x = self.base.w1().matvec_t_unchecked(&grad_pre);

        // d loss / d s_i for each selected expert
        let mut grad_weights = Vec::with_capacity(cache.decision.selected.len());
        for (&(i, weight), (hidden, delta)) in cache.decision.selected.iter().zip(&cache.expert_parts) {
            let grad_delta: Vec<f64> = grad_pre.iter().map(|g| g * weight).collect();
            let (head, tail) = grads.split_at_mut(2 * i + 1);
            let gx = self.experts[i].backward(x, hidden, &grad_delta, &mut head[2 * i], &mut tail[0]);
            for (a, b) in grad_x.iter_mut().zip(gx) {
                *a += b;
            }
            grad_weights.push(grad_pre.iter().zip(delta).map(|(g, d)| g * d).sum::<f64>());
        }

        // s_i = exp(z_i) / Σ_{j∈S} exp(z_j), so ∂s_i/∂z_j = s_i(δ_ij − s_j) on the selected set
        // and unselected logits get nothing.
        let mean: f64 = cache
            .decision
            .selected
            .iter()
            .zip(&grad_weights)
            .map(|((_, s), g)| s * g)
            .sum();
        let mut grad_logits = vec![0.0; n];
        for ((i, s), g) in cache.decision.selected.iter().zip(&grad_weights) {
            grad_logits[*i] = s * (g - mean);
        }
        grads[2 * n].add_outer(x, &grad_logits);
        let from_router = self.router.weights().matvec_unchecked(&grad_logits);
        for (a, b) in grad_x.iter_mut().zip(from_router) {
            *a += b;
        }
        Ok(grad_x)
    }

    /// Exact gradients of `upstream · y` with respect to every expert factor
    /// and the router weights. The frozen base gets no gradient.
    pub fn gradients(&self, cache: &MoralCache, upstream: &[f64]) -> Result<(MoralGradients, Vec<f64>)> {
        let mut flat = self.zero_grads();
        let grad_x = self.accumulate(cache, upstream, &mut flat)?;
        Ok((MoralGradients::from_flat(flat), grad_x))
    }

    pub fn session(&self) -> GradientSession<'_> {
        GradientSession {
            layer: self,
            cache: None,
        }
    }
}

impl AdaptedFfn for MoralLayer {
    type Cache = MoralCache;

    fn base(&self) -> &FrozenFfn {
        &self.base
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_with_cache(x).map(|(y, _)| y)
    }

    fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, MoralCache)> {
        self.forward_with_cache(x)
    }

    fn backward(&self, cache: &MoralCache, grad_y: &[f64], grads: &mut [Matrix]) -> Result<Vec<f64>> {
        self.accumulate(cache, grad_y, grads)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.experts.iter().flat_map(|e| [e.down(), e.up()]).collect();
        out.push(self.router.weights());
        out
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::with_capacity(2 * self.experts.len() + 1);
        for e in &mut self.experts {
            let (down, up) = e.factors_mut();
            out.push(down);
            out.push(up);
        }
        out.push(self.router.weights_mut());
        out
    }

    fn trainable_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.experts.len())
            .flat_map(|i| [format!("expert{i}.down"), format!("expert{i}.up")])
            .collect();
        out.push("router.w_g".into());
        out
    }
}

/// Stateful wrapper: run [`forward`](Self::forward) first, then ask for
/// gradients of the most recent input.
pub struct GradientSession<'a> {
    layer: &'a MoralLayer,
    cache: Option<MoralCache>,
}

impl GradientSession<'_> {
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let (y, cache) = self.layer.forward_with_cache(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn gradients(&self, upstream: &[f64]) -> Result<(MoralGradients, Vec<f64>)> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("moral_gradients called before a forward pass".into()))?;
        self.layer.gradients(cache, upstream)
    }
}
