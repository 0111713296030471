//! Network simplex for the balanced transportation problem on a complete bipartite graph.
//!
//! Arcs are implicit (source `i` to sink `j`, index `i * m + j`) and costs are evaluated on
//! demand, so memory stays linear in `n + m` even at `n * m = 10^7`. An artificial root joins
//! every node with a big-M arc; the initial star tree is strongly feasible and the leaving-arc
//! rule keeps it that way, which rules out cycling. Flows are integers.

use crate::error::{Error, Result};

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// `sum flow * cost` over the plan, in the caller's integer flow units.
    pub total_cost: f64,
    pub total_flow: i64,
    /// Nonzero entries `(source, sink, flow)`.
    pub flows: Vec<(usize, usize, i64)>,
    pub pivots: usize,
}

impl TransportPlan {
    pub fn mean_cost(&self) -> f64 {
        self.total_cost / self.total_flow as f64
    }
}

struct Simplex<'a, F: Fn(usize, usize) -> f64> {
    n: usize,
    m: usize,
    root: usize,
    cost: &'a F,
    art_cost: f64,
    eps: f64,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<i8>,
    flow: Vec<i64>,
    pi: Vec<f64>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    block: usize,
    next_arc: usize,
}

impl<'a, F: Fn(usize, usize) -> f64> Simplex<'a, F> {
    fn arc_count(&self) -> usize {
        self.n * self.m
    }

    fn is_real(&self, e: usize) -> bool {
        e < self.arc_count()
    }

    fn source(&self, e: usize) -> usize {
        if self.is_real(e) {
            e / self.m
        } else {
            let u = e - self.arc_count();
            if u < self.n {
                u
            } else {
                self.root
            }
        }
    }

    fn target(&self, e: usize) -> usize {
        if self.is_real(e) {
            self.n + e % self.m
        } else {
            let u = e - self.arc_count();
            if u < self.n {
                self.root
            } else {
                u
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if self.is_real(e) {
            (self.cost)(e / self.m, e % self.m)
        } else {
            self.art_cost
        }
    }

    fn detach(&mut self, u: usize) {
        let p = self.parent[u];
        let (prev, next) = (self.prev_sib[u], self.next_sib[u]);
        if prev == NONE {
            self.first_child[p] = next;
        } else {
            self.next_sib[prev] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
        self.prev_sib[u] = NONE;
        self.next_sib[u] = NONE;
    }

    fn attach(&mut self, u: usize, p: usize) {
        self.parent[u] = p;
        let head = self.first_child[p];
        self.next_sib[u] = head;
        self.prev_sib[u] = NONE;
        if head != NONE {
            self.prev_sib[head] = u;
        }
        self.first_child[p] = u;
    }

    /// Most negative reduced cost within the first block that has one.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.arc_count();
        let mut best = NONE;
        let mut best_rc = -self.eps;
        let mut scanned = 0;
        let mut in_block = 0;
        let mut e = self.next_arc;
        while scanned < total {
            let (i, j) = (e / self.m, e % self.m);
            let rc = (self.cost)(i, j) + self.pi[i] - self.pi[self.n + j];
            if rc < best_rc {
                best_rc = rc;
                best = e;
            }
            scanned += 1;
            in_block += 1;
            e += 1;
            if e == total {
                e = 0;
            }
            if in_block == self.block {
                if best != NONE {
                    self.next_arc = e;
                    return Some(best);
                }
                in_block = 0;
            }
        }
        if best != NONE {
            self.next_arc = e;
            Some(best)
        } else {
            None
        }
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let first = self.source(in_arc);
        let second = self.target(in_arc);
        let join = self.join(first, second);

        // Leaving arc: the first blocking arc in cycle orientation, last one on ties
        // (strict on the first side, non-strict on the second).
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.dir[u] == UP && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                side = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.dir[u] == DOWN && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                side = 2;
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Degenerate("transport problem is unbounded"));
        }

        if delta > 0 {
            let mut u = first;
            while u != join {
                self.flow[u] -= self.dir[u] as i64 * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                self.flow[u] += self.dir[u] as i64 * delta;
                u = self.parent[u];
            }
        }

        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };

        // Reverse the tree path u_in -> u_out and hang it from v_in via the entering arc.
        let mut path = vec![u_in];
        let mut w = u_in;
        while w != u_out {
            w = self.parent[w];
            path.push(w);
        }
        let old_pred: Vec<usize> = path.iter().map(|&w| self.pred[w]).collect();
        let old_dir: Vec<i8> = path.iter().map(|&w| self.dir[w]).collect();
        let old_flow: Vec<i64> = path.iter().map(|&w| self.flow[w]).collect();
        for &w in &path {
            self.detach(w);
        }
        self.attach(u_in, v_in);
        self.pred[u_in] = in_arc;
        self.dir[u_in] = if self.source(in_arc) == u_in { UP } else { DOWN };
        self.flow[u_in] = delta;
        for i in 1..path.len() {
            let w = path[i];
            self.attach(w, path[i - 1]);
            self.pred[w] = old_pred[i - 1];
            self.dir[w] = -old_dir[i - 1];
            self.flow[w] = old_flow[i - 1];
        }

        // Shift potentials of the re-hung subtree so the entering arc has zero reduced cost.
        let c = self.arc_cost(in_arc);
        let rc = c + self.pi[self.source(in_arc)] - self.pi[self.target(in_arc)];
        let sigma = if self.source(in_arc) == u_in { -rc } else { rc };
        let mut stack = vec![u_in];
        self.depth[u_in] = self.depth[v_in] + 1;
        while let Some(x) = stack.pop() {
            self.pi[x] += sigma;
            let mut ch = self.first_child[x];
            while ch != NONE {
                self.depth[ch] = self.depth[x] + 1;
                stack.push(ch);
                ch = self.next_sib[ch];
            }
        }
        Ok(())
    }
}

/// Minimum-cost plan moving `supply[i]` units out of source `i` into sinks with `demand[j]`.
pub fn solve<F: Fn(usize, usize) -> f64>(supply: &[i64], demand: &[i64], cost: &F) -> Result<TransportPlan> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::Degenerate("empty transport problem"));
    }
    let total: i64 = supply.iter().sum();
    if total != demand.iter().sum::<i64>() || supply.iter().chain(demand).any(|&x| x <= 0) {
        return Err(Error::Config("transport masses must be positive and balanced".into()));
    }

    let mut max_cost: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if !c.is_finite() {
                return Err(Error::NonFinite);
            }
            max_cost = max_cost.max(c.abs());
        }
    }

    let nodes = n + m + 1;
    let root = n + m;
    let art_cost = (max_cost + 1.0) * (n + m) as f64;
    let mut s = Simplex {
        n,
        m,
        root,
        cost,
        art_cost,
        eps: 1e-12 * max_cost.max(1e-300),
        parent: vec![NONE; nodes],
        pred: vec![NONE; nodes],
        dir: vec![0; nodes],
        flow: vec![0; nodes],
        pi: vec![0.0; nodes],
        depth: vec![0; nodes],
        first_child: vec![NONE; nodes],
        next_sib: vec![NONE; nodes],
        prev_sib: vec![NONE; nodes],
        block: ((n * m) as f64).sqrt().ceil().max(10.0) as usize,
        next_arc: 0,
    };
    for u in 0..n + m {
        s.attach(u, root);
        s.pred[u] = n * m + u;
        s.depth[u] = 1;
        if u < n {
            s.dir[u] = UP;
            s.flow[u] = supply[u];
            s.pi[u] = -art_cost;
        } else {
            s.dir[u] = DOWN;
            s.flow[u] = demand[u - n];
            s.pi[u] = art_cost;
        }
    }

    let mut pivots = 0;
    while let Some(e) = s.find_entering() {
        s.pivot(e)?;
        pivots += 1;
    }

    let mut flows = Vec::new();
    let mut total_cost = 0.0;
    for u in 0..n + m {
        let e = s.pred[u];
        if s.is_real(e) {
            if s.flow[u] > 0 {
                let (i, j) = (e / m, e % m);
                flows.push((i, j, s.flow[u]));
                total_cost += s.flow[u] as f64 * cost(i, j);
            }
        } else if s.flow[u] != 0 {
            return Err(Error::Degenerate("artificial arc kept flow; transport infeasible"));
        }
    }
    flows.sort_unstable();
    Ok(TransportPlan {
        total_cost,
        total_flow: total,
        flows,
        pivots,
    })
}
