//! Fixed-width histograms with a trailing overflow bin, written as
//! `bin_start_minutes,count` CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: u32,
    /// Start of the last bin, which also collects every larger value and every
    /// value that was never reached.
    pub overflow_start: u32,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `overflow_start` is rounded up to a multiple of `bin_width`.
    pub fn new(bin_width: u32, overflow_start: u32) -> Self {
        let bin_width = bin_width.max(1);
        let bins = overflow_start.div_ceil(bin_width) as usize + 1;
        Histogram {
            bin_width,
            overflow_start: (bins as u32 - 1) * bin_width,
            counts: vec![0; bins],
        }
    }

    pub fn from_values(bin_width: u32, overflow_start: u32, values: &[Option<u32>]) -> Self {
        let mut h = Histogram::new(bin_width, overflow_start);
        values.iter().for_each(|&v| h.add(v));
        h
    }

    pub fn add(&mut self, value: Option<u32>) {
        let last = self.counts.len() - 1;
        let bin = value.map_or(last, |v| ((v / self.bin_width) as usize).min(last));
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u32 * self.bin_width, c))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_start_minutes,count")?;
        for (start, count) in self.rows() {
            writeln!(out, "{start},{count}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
