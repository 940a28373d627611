//! Strongly connected components and their condensation.
//!
//! Iterative Tarjan so that deep graphs cannot overflow the stack.

/// Adjacency given as out-neighbour lists, `succ[u]` = vertices `v` with an edge `u -> v`.
pub(crate) struct Components {
    /// Component id of every vertex. Ids are in reverse topological order
    /// (Tarjan emits sinks first).
    pub comp_of: Vec<usize>,
    pub count: usize,
}

pub(crate) fn tarjan(succ: &[Vec<usize>]) -> Components {
    const UNSEEN: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    let mut comp_of = vec![UNSEEN; n];
    let mut count = 0;
    let mut next_index = 0;
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp_of[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    Components { comp_of, count }
}

impl Components {
    /// Components with no incoming edge from any other component.
    pub fn sources(&self, succ: &[Vec<usize>]) -> Vec<usize> {
        let mut has_input = vec![false; self.count];
        for (u, outs) in succ.iter().enumerate() {
            for &v in outs {
                if self.comp_of[u] != self.comp_of[v] {
                    has_input[self.comp_of[v]] = true;
                }
            }
        }
        (0..self.count).filter(|&c| !has_input[c]).collect()
    }

    pub fn members(&self, comp: usize) -> Vec<usize> {
        self.comp_of
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == comp)
            .map(|(v, _)| v)
            .collect()
    }
}
