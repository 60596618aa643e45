//! Sparse-by-row gradient storage over the user and item embedding rows.

use crate::error::Entity;

/// Gradient rows keyed by (entity, id).
///
/// Storage is dense over all rows for fast accumulation, with a record of
/// which rows were touched. Only touched rows are reported by [`iter`], and
/// only those receive optimizer updates.
///
/// [`iter`]: Gradients::iter
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    num_users: usize,
    num_items: usize,
    dim: usize,
    data: Vec<f64>,
    touched: Vec<bool>,
    touched_count: usize,
}

impl Gradients {
    pub fn new(num_users: usize, num_items: usize, dim: usize) -> Self {
        let rows = num_users + num_items;
        Self {
            num_users,
            num_items,
            dim,
            data: vec![0.0; rows * dim],
            touched: vec![false; rows],
            touched_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_rows(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn node(&self, entity: Entity, id: usize) -> usize {
        match entity {
            Entity::User => {
                assert!(id < self.num_users);
                id
            }
            Entity::Item => {
                assert!(id < self.num_items);
                self.num_users + id
            }
        }
    }

    pub fn entity_of(&self, node: usize) -> (Entity, usize) {
        if node < self.num_users {
            (Entity::User, node)
        } else {
            (Entity::Item, node - self.num_users)
        }
    }

    /// Mutable access to a row; marks it touched.
    pub fn row_mut(&mut self, node: usize) -> &mut [f64] {
        if !self.touched[node] {
            self.touched[node] = true;
            self.touched_count += 1;
        }
        &mut self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn add_to_row(&mut self, node: usize, scale: f64, v: &[f64]) {
        let row = self.row_mut(node);
        for (r, x) in row.iter_mut().zip(v) {
            *r += scale * x;
        }
    }

    pub fn row(&self, node: usize) -> Option<&[f64]> {
        self.touched[node].then(|| &self.data[node * self.dim..(node + 1) * self.dim])
    }

    pub fn get(&self, entity: Entity, id: usize) -> Option<&[f64]> {
        self.row(self.node(entity, id))
    }

    pub fn is_touched(&self, node: usize) -> bool {
        self.touched[node]
    }

    pub fn touched_count(&self) -> usize {
        self.touched_count
    }

    /// Touched rows in node order: users first, then items.
    pub fn iter(&self) -> impl Iterator<Item = (Entity, usize, &[f64])> + '_ {
        (0..self.num_rows()).filter_map(move |node| {
            self.row(node).map(|g| {
                let (e, id) = self.entity_of(node);
                (e, id, g)
            })
        })
    }

    pub fn touched_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_rows()).filter(move |&n| self.touched[n])
    }

    /// Raw dense buffer (untouched rows are zero).
    pub fn as_dense(&self) -> &[f64] {
        &self.data
    }

    /// Replaces the contents with a dense gradient; rows with any nonzero
    /// entry become touched.
    pub fn from_dense(num_users: usize, num_items: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (num_users + num_items) * dim);
        let touched: Vec<bool> = data.chunks(dim).map(|r| r.iter().any(|&x| x != 0.0)).collect();
        let touched_count = touched.iter().filter(|&&t| t).count();
        Self {
            num_users,
            num_items,
            dim,
            data,
            touched,
            touched_count,
        }
    }

    /// `self += scale * other`, taking the union of touched rows.
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        assert_eq!(self.data.len(), other.data.len());
        for node in other.touched_nodes() {
            let src = &other.data[node * self.dim..(node + 1) * self.dim];
            let dst = self.row_mut(node);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
