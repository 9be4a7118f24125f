//! Straight-line interpreter of the reverse-flow forwarding pseudocode.
//!
//! Shares nothing with the library's engine: coordinates are plain tuples,
//! directions are indices 0..4 (N, E, S, W), potentials come from the
//! closed-form torus distance and link state comes from a caller closure.

#![allow(dead_code)]

pub type Coord = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefMethod {
    Nf,
    Lfa,
    CounterFacing,
    LateralFacing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefVerdict {
    Delivered,
    NoEgress,
    Ttl,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefOutcome {
    pub verdict: RefVerdict,
    /// (from, to, direction index) per hop.
    pub hops: Vec<(Coord, Coord, usize)>,
    pub reverse_hops: usize,
    pub annihilations: Vec<Coord>,
}

const DELTAS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub struct RefTorus<'a> {
    pub rows: usize,
    pub cols: usize,
    pub link_up: &'a dyn Fn(Coord, Coord) -> bool,
}

impl RefTorus<'_> {
    fn step(&self, v: Coord, d: usize) -> Coord {
        let (dr, dc) = DELTAS[d];
        let r = (v.0 as isize + dr).rem_euclid(self.rows as isize) as usize;
        let c = (v.1 as isize + dc).rem_euclid(self.cols as isize) as usize;
        (r, c)
    }

    pub fn dist(&self, a: Coord, b: Coord) -> usize {
        let dr = a.0.abs_diff(b.0);
        let dc = a.1.abs_diff(b.1);
        dr.min(self.rows - dr) + dc.min(self.cols - dc)
    }

    fn primary(&self, v: Coord, dst: Coord) -> usize {
        let here = self.dist(v, dst);
        (0..4)
            .find(|&d| self.dist(self.step(v, d), dst) + 1 == here)
            .expect("every non-destination node has a downhill neighbour")
    }

    fn up(&self, v: Coord, d: usize) -> bool {
        (self.link_up)(v, self.step(v, d))
    }

    pub fn route(
        &self,
        method: RefMethod,
        src: Coord,
        dst: Coord,
        sst: usize,
        ttl: usize,
    ) -> RefOutcome {
        let mut at = src;
        let mut ingress: Option<usize> = None;
        // 0 = opposite first, 1 = side first
        let mut policy = if method == RefMethod::LateralFacing { 1 } else { 0 };
        let mut h = 0usize;
        let mut in_reverse = false;
        let mut hops = Vec::new();
        let mut annihilations = Vec::new();

        let finish = |verdict, hops: Vec<(Coord, Coord, usize)>, annihilations| {
            let reverse_hops = hops
                .iter()
                .filter(|(f, t, _)| self.dist(*t, dst) >= self.dist(*f, dst))
                .count();
            RefOutcome {
                verdict,
                hops,
                reverse_hops,
                annihilations,
            }
        };

        loop {
            if at == dst {
                return finish(RefVerdict::Delivered, hops, annihilations);
            }
            if hops.len() >= ttl {
                return finish(RefVerdict::Ttl, hops, annihilations);
            }
            let e = self.primary(at, dst);
            let degree = (0..4).filter(|&d| self.up(at, d)).count();
            let dir;
            match method {
                RefMethod::Nf => {
                    if self.up(at, e) {
                        dir = e;
                    } else {
                        return finish(RefVerdict::NoEgress, hops, annihilations);
                    }
                }
                RefMethod::Lfa => {
                    if self.up(at, e) {
                        dir = e;
                    } else {
                        let here = self.dist(at, dst);
                        match (0..4)
                            .find(|&d| self.up(at, d) && self.dist(self.step(at, d), dst) < here)
                        {
                            Some(d) => dir = d,
                            None => return finish(RefVerdict::NoEgress, hops, annihilations),
                        }
                    }
                }
                RefMethod::CounterFacing | RefMethod::LateralFacing => {
                    if ingress == Some(e) {
                        // reverse flow arriving at B
                        if h > sst {
                            policy = 1 - policy;
                            h = 0;
                        }
                        let i_in = e;
                        let o = (i_in + 2) % 4;
                        let s1 = (i_in + 1) % 4;
                        let s2 = (i_in + 3) % 4;
                        if degree == 2 {
                            dir = if self.up(at, o) { o } else { i_in };
                        } else if degree >= 3 {
                            let order = if policy == 0 { [o, s1, s2] } else { [s1, s2, o] };
                            dir = order.into_iter().find(|&d| self.up(at, d)).unwrap_or(i_in);
                        } else {
                            dir = i_in;
                        }
                        in_reverse = true;
                        h += 1;
                    } else {
                        if in_reverse {
                            annihilations.push(at);
                            in_reverse = false;
                            h = 0;
                        }
                        if self.up(at, e) {
                            dir = e;
                        } else {
                            let o = (e + 2) % 4;
                            let s1 = (e + 1) % 4;
                            let s2 = (e + 3) % 4;
                            let pick = if degree == 2 {
                                if self.up(at, o) {
                                    Some(o)
                                } else {
                                    None
                                }
                            } else if degree >= 3 {
                                let order = if policy == 0 { [o, s1, s2] } else { [s1, s2, o] };
                                order.into_iter().find(|&d| self.up(at, d))
                            } else {
                                None
                            };
                            match pick {
                                Some(d) => dir = d,
                                None => return finish(RefVerdict::NoEgress, hops, annihilations),
                            }
                            in_reverse = true;
                            h += 1;
                        }
                    }
                }
            }
            let next = self.step(at, dir);
            hops.push((at, next, dir));
            ingress = Some((dir + 2) % 4);
            at = next;
        }
    }
}
