//! Systematic LDPC code for the binary erasure channel.
//!
//! Variables `0..k` carry the message with degree [`MESSAGE_DEGREE`], placed on the `m =
//! n - k` checks by a seeded socket shuffle with local repair of repeated
//! checks and 4-cycles. The parity part is a staircase: parity `j >= 1` sits
//! on checks `j - 1` and `j`, parity 0 on checks `0`, `m / 2` and `m - 1`. That
//! makes encoding linear time (parity 0 is the sum of all message syndromes)
//! and gives every variable degree at least 2.
//!
//! Decoding first peels (solve any check with one erased neighbour). When
//! peeling stalls, an erased variable is declared inactive and carried
//! symbolically, peeling resumes, and the leftover checks are solved for the
//! inactive variables by Gaussian elimination. Any message bit that is not
//! uniquely determined makes the whole decode fail; nothing is guessed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Degree of every message variable.
pub const MESSAGE_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    seed: u64,
    check_offsets: Vec<usize>,
    check_vars: Vec<u32>,
    var_offsets: Vec<usize>,
    var_checks: Vec<u32>,
}

impl LdpcCode {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k >= n || n - k < 3 {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k and at least 3 parity bits, got n = {n}, k = {k}"
            )));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("code length {n} too large")));
        }
        let m = n - k;
        let message = place_message_edges(k, m, seed);

        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); m];
        for (v, checks) in message.iter().enumerate() {
            for &c in checks {
                rows[c as usize].push(v as u32);
            }
        }
        let p = |j: usize| (k + j) as u32;
        let mid = m / 2;
        rows[0].push(p(0));
        rows[mid].push(p(0));
        rows[m - 1].push(p(0));
        for j in 1..m {
            rows[j - 1].push(p(j));
            rows[j].push(p(j));
        }

        let mut check_offsets = Vec::with_capacity(m + 1);
        let mut check_vars = Vec::new();
        check_offsets.push(0);
        for row in &mut rows {
            row.sort_unstable();
            check_vars.extend_from_slice(row);
            check_offsets.push(check_vars.len());
        }
        let mut var_lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (c, row) in rows.iter().enumerate() {
            for &v in row {
                var_lists[v as usize].push(c as u32);
            }
        }
        let mut var_offsets = Vec::with_capacity(n + 1);
        let mut var_checks = Vec::new();
        var_offsets.push(0);
        for list in &var_lists {
            var_checks.extend_from_slice(list);
            var_offsets.push(var_checks.len());
        }
        Ok(LdpcCode {
            n,
            k,
            seed,
            check_offsets,
            check_vars,
            var_offsets,
            var_checks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn checks(&self) -> usize {
        self.n - self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Variables attached to check `c`.
    pub fn check(&self, c: usize) -> &[u32] {
        &self.check_vars[self.check_offsets[c]..self.check_offsets[c + 1]]
    }

    /// Checks attached to variable `v`.
    pub fn variable(&self, v: usize) -> &[u32] {
        &self.var_checks[self.var_offsets[v]..self.var_offsets[v + 1]]
    }

    pub fn is_codeword(&self, bits: &[bool]) -> bool {
        bits.len() == self.n
            && (0..self.checks()).all(|c| !self.check(c).iter().fold(false, |acc, &v| acc ^ bits[v as usize]))
    }

    /// Systematic encoding; `message` shorter than `k` is zero-padded.
    pub fn encode(&self, message: &[bool]) -> Result<Vec<bool>> {
        if message.len() > self.k {
            return Err(Error::InvalidArgument(format!(
                "message of {} bits exceeds k = {}",
                message.len(),
                self.k
            )));
        }
        let (n, k, m) = (self.n, self.k, self.checks());
        let mut word = vec![false; n];
        word[..message.len()].copy_from_slice(message);
        let syndrome: Vec<bool> = (0..m)
            .map(|c| {
                self.check(c)
                    .iter()
                    .filter(|&&v| (v as usize) < k)
                    .fold(false, |acc, &v| acc ^ word[v as usize])
            })
            .collect();
        let mid = m / 2;
        let p0 = syndrome.iter().fold(false, |a, &s| a ^ s);
        word[k] = p0;
        word[k + 1] = syndrome[0] ^ p0;
        for i in 1..m - 1 {
            word[k + i + 1] = syndrome[i] ^ word[k + i] ^ (i == mid && p0);
        }
        Ok(word)
    }

    /// Recovers the `k` message bits from a received word (`None` = erased).
    pub fn decode(&self, received: &[Option<bool>]) -> Result<Vec<bool>> {
        self.decode_with_limit(received, self.checks())
    }

    /// Pure peeling, no inactivation.
    pub fn decode_peeling(&self, received: &[Option<bool>]) -> Result<Vec<bool>> {
        self.decode_with_limit(received, 0)
    }

    /// Decodes with at most `max_inactivations` symbolic variables.
    pub fn decode_with_limit(&self, received: &[Option<bool>], max_inactivations: usize) -> Result<Vec<bool>> {
        if received.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "received word has {} symbols, code length is {}",
                received.len(),
                self.n
            )));
        }
        let erased = received.iter().filter(|b| b.is_none()).count();
        if erased > self.checks() {
            // more unknowns than equations: the solution cannot be unique
            let unresolved = received[..self.k].iter().filter(|b| b.is_none()).count();
            return Err(Error::DecodeFailure { unresolved });
        }
        // widen the symbolic bitsets only when a run actually needs it
        let mut cap = max_inactivations.min(256);
        loop {
            match Decoder::new(self, received, cap).run() {
                Outcome::Done(bits) => return Ok(bits),
                Outcome::Failed(e) => return Err(e),
                Outcome::NeedsWider if cap < max_inactivations => cap = (cap * 4).min(max_inactivations),
                Outcome::NeedsWider => {
                    return Err(Error::DecodeFailure {
                        unresolved: Decoder::new(self, received, 0).unresolved_after_peeling(),
                    })
                }
            }
        }
    }
}

/// Socket shuffle for the message part, then repair passes.
fn place_message_edges(k: usize, m: usize, seed: u64) -> Vec<[u32; MESSAGE_DEGREE]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = MESSAGE_DEGREE * k;
    let mut sockets: Vec<u32> = (0..total).map(|i| (i % m) as u32).collect();
    sockets.shuffle(&mut rng);
    let mut edges: Vec<[u32; MESSAGE_DEGREE]> = sockets.chunks(MESSAGE_DEGREE).map(|c| c.try_into().unwrap()).collect();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (v, e) in edges.iter().enumerate() {
        for &c in e {
            members[c as usize].push(v as u32);
        }
    }

    let conflict = |edges: &[[u32; MESSAGE_DEGREE]], members: &[Vec<u32>], v: usize| -> Option<usize> {
        let e = edges[v];
        for a in 0..MESSAGE_DEGREE {
            for b in a + 1..MESSAGE_DEGREE {
                if e[a] == e[b] {
                    return Some(b);
                }
                // another variable on both checks closes a 4-cycle
                let shared = members[e[a] as usize]
                    .iter()
                    .any(|&u| u as usize != v && edges[u as usize].contains(&e[b]));
                if shared {
                    return Some(b);
                }
            }
        }
        None
    };

    for _pass in 0..20 {
        let mut changed = false;
        for v in 0..k {
            let mut attempts = 0;
            while let Some(slot) = conflict(&edges, &members, v) {
                if attempts == 16 {
                    break;
                }
                attempts += 1;
                let u = rng.random_range(0..k);
                let uslot = rng.random_range(0..MESSAGE_DEGREE);
                let (cv, cu) = (edges[v][slot], edges[u][uslot]);
                if u == v || cv == cu || edges[v].contains(&cu) || edges[u].contains(&cv) {
                    continue;
                }
                edges[v][slot] = cu;
                edges[u][uslot] = cv;
                let list = &mut members[cv as usize];
                list.swap_remove(list.iter().position(|&x| x as usize == v).unwrap());
                list.push(u as u32);
                let list = &mut members[cu as usize];
                list.swap_remove(list.iter().position(|&x| x as usize == u).unwrap());
                list.push(v as u32);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // a repeated check would cancel out of the parity; fix any survivor
    // deterministically by moving it to the next free check
    for e in &mut edges {
        for b in 1..MESSAGE_DEGREE {
            while e[..b].contains(&e[b]) {
                e[b] = (e[b] + 1) % m as u32;
            }
        }
    }
    edges
}

enum Outcome {
    Done(Vec<bool>),
    Failed(Error),
    NeedsWider,
}

struct Decoder<'a> {
    code: &'a LdpcCode,
    words: usize,
    cap: usize,
    resolved: Vec<bool>,
    value: Vec<bool>,
    var_sym: Vec<u64>,
    check_value: Vec<bool>,
    check_sym: Vec<u64>,
    check_count: Vec<u32>,
    check_xor: Vec<u32>,
    check_used: Vec<bool>,
    queue: Vec<usize>,
    inactive: usize,
    scratch: Vec<u64>,
}

impl<'a> Decoder<'a> {
    fn new(code: &'a LdpcCode, received: &[Option<bool>], cap: usize) -> Self {
        let words = cap.div_ceil(64);
        let m = code.checks();
        let mut d = Decoder {
            code,
            words,
            cap,
            resolved: received.iter().map(|b| b.is_some()).collect(),
            value: received.iter().map(|b| b.unwrap_or(false)).collect(),
            var_sym: vec![0; code.n * words],
            check_value: vec![false; m],
            check_sym: vec![0; m * words],
            check_count: vec![0; m],
            check_xor: vec![0; m],
            check_used: vec![false; m],
            queue: Vec::new(),
            inactive: 0,
            scratch: vec![0; words],
        };
        for c in 0..m {
            for &v in code.check(c) {
                if d.resolved[v as usize] {
                    d.check_value[c] ^= d.value[v as usize];
                } else {
                    d.check_count[c] += 1;
                    d.check_xor[c] ^= v;
                }
            }
            if d.check_count[c] == 1 {
                d.queue.push(c);
            }
        }
        d
    }

    /// Marks `v` as known to be `value ^ <sym, x>` and updates its checks.
    /// The symbolic part is taken from `self.scratch`.
    fn settle(&mut self, v: usize, value: bool) {
        let w = self.words;
        self.resolved[v] = true;
        self.value[v] = value;
        self.var_sym[v * w..(v + 1) * w].copy_from_slice(&self.scratch);
        for &c in self.code.variable(v) {
            let c = c as usize;
            self.check_value[c] ^= value;
            for (dst, src) in self.check_sym[c * w..(c + 1) * w].iter_mut().zip(&self.scratch) {
                *dst ^= src;
            }
            self.check_count[c] -= 1;
            self.check_xor[c] ^= v as u32;
            if self.check_count[c] == 1 && !self.check_used[c] {
                self.queue.push(c);
            }
        }
    }

    fn peel(&mut self) {
        let w = self.words;
        while let Some(c) = self.queue.pop() {
            if self.check_used[c] || self.check_count[c] != 1 {
                continue;
            }
            self.check_used[c] = true;
            let v = self.check_xor[c] as usize;
            self.scratch.copy_from_slice(&self.check_sym[c * w..(c + 1) * w]);
            self.settle(v, self.check_value[c]);
        }
    }

    fn unresolved_after_peeling(mut self) -> usize {
        self.peel();
        self.resolved[..self.code.k].iter().filter(|&&r| !r).count()
    }

    /// Picks an unresolved variable on the open check with fewest unknowns.
    fn pick_inactive(&self) -> Option<usize> {
        let c = (0..self.code.checks())
            .filter(|&c| !self.check_used[c] && self.check_count[c] >= 2)
            .min_by_key(|&c| self.check_count[c])?;
        self.code
            .check(c)
            .iter()
            .map(|&v| v as usize)
            .filter(|&v| !self.resolved[v])
            .max_by_key(|&v| self.code.variable(v).len())
    }

    fn run(mut self) -> Outcome {
        loop {
            self.peel();
            if self.resolved.iter().all(|&r| r) {
                break;
            }
            if self.inactive == self.cap {
                return Outcome::NeedsWider;
            }
            let Some(v) = self.pick_inactive() else {
                break;
            };
            let id = self.inactive;
            self.inactive += 1;
            self.scratch.fill(0);
            self.scratch[id / 64] |= 1 << (id % 64);
            self.settle(v, false);
        }
        let k = self.code.k;
        if !self.resolved[..k].iter().all(|&r| r) {
            let unresolved = self.resolved[..k].iter().filter(|&&r| !r).count();
            return Outcome::Failed(Error::DecodeFailure { unresolved });
        }
        if self.inactive == 0 {
            let word = self.value.clone();
            return self.finish(word);
        }
        self.solve()
    }

    /// Rejects words that violate a check; the erasure channel cannot
    /// produce them, so the input was damaged some other way.
    fn finish(&self, word: Vec<bool>) -> Outcome {
        if !self.code.is_codeword(&word) {
            return Outcome::Failed(Error::Malformed("received bits violate the parity checks".into()));
        }
        Outcome::Done(word[..self.code.k].to_vec())
    }

    /// Gaussian elimination over the checks not consumed by peeling.
    fn solve(self) -> Outcome {
        let w = self.words;
        let unknowns = self.inactive;
        let mut rows: Vec<(Vec<u64>, bool)> = (0..self.code.checks())
            .filter(|&c| !self.check_used[c] && self.check_count[c] == 0)
            .map(|c| (self.check_sym[c * w..(c + 1) * w].to_vec(), self.check_value[c]))
            .collect();
        let mut pivots: Vec<usize> = Vec::new();
        let mut rank = 0;
        for col in 0..unknowns {
            let (word, bit) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (rank..rows.len()).find(|&r| rows[r].0[word] & bit != 0) else {
                continue;
            };
            rows.swap(rank, p);
            let (pivot_sym, pivot_val) = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.0[word] & bit != 0 {
                    row.0.iter_mut().zip(&pivot_sym).for_each(|(a, b)| *a ^= b);
                    row.1 ^= pivot_val;
                }
            }
            pivots.push(col);
            rank += 1;
        }
        if rows[rank..].iter().any(|(_, v)| *v) {
            return Outcome::Failed(Error::Malformed("received bits violate the parity checks".into()));
        }

        let k = self.code.k;
        let mut x = vec![0u64; w];
        for (r, &col) in pivots.iter().enumerate() {
            if rows[r].1 {
                x[col / 64] |= 1 << (col % 64);
            }
        }
        if rank < unknowns {
            // a message bit is determined only if it reduces to a constant
            // once the pivot rows are substituted
            let mut unresolved = 0;
            for v in 0..k {
                let mut sym = self.var_sym[v * w..(v + 1) * w].to_vec();
                for (r, &col) in pivots.iter().enumerate() {
                    if sym[col / 64] & (1 << (col % 64)) != 0 {
                        sym.iter_mut().zip(&rows[r].0).for_each(|(a, b)| *a ^= b);
                    }
                }
                if sym.iter().any(|&s| s != 0) {
                    unresolved += 1;
                }
            }
            if unresolved > 0 {
                return Outcome::Failed(Error::DecodeFailure { unresolved });
            }
        }
        // with free variables set to zero the pivot values are the row constants
        let word = (0..self.code.n)
            .map(|v| {
                let sym = &self.var_sym[v * w..(v + 1) * w];
                let dot = sym.iter().zip(&x).fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones()) & 1;
                self.value[v] ^ (dot == 1)
            })
            .collect();
        self.finish(word)
    }
}
