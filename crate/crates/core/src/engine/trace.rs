//! Spike trace export as `timestep,population,neuron_index` CSV.

use std::io::Write;

use super::{Network, SpikeBatch};

pub struct SpikeTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> SpikeTraceWriter<W> {
    pub fn new(writer: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(["timestep", "population", "neuron_index"])?;
        Ok(Self { inner })
    }

    pub fn write_batch<T>(&mut self, network: &Network<T>, batch: &SpikeBatch) -> csv::Result<()>
    where
        T: crate::Scalar,
    {
        for s in &batch.spikes {
            self.inner.write_record([
                batch.timestep.to_string(),
                network.population_name(s.population).to_string(),
                s.index.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}
