//! Binary chain checkpoints. All integers and floats are little-endian;
//! the layout is fixed by the version number in the header.

use sigma_core::mcmc::{AcceptanceStats, ChainSnapshot, ModelParams};
use sigma_core::rng::RngState;
use sigma_core::spectral::CountertermKind;

pub const MAGIC: &[u8; 8] = b"SIGMACKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0} (this build reads {VERSION})")]
    Version(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after checkpoint")]
    Trailing(usize),
    #[error("invalid checkpoint field: {0}")]
    Field(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub side_length: f64,
    pub grid_points: u64,
    pub components: u64,
    pub counterterm: CountertermKind,
    pub counterterm_ref: f64,
    pub counterterm_mass: f64,
    pub mass: f64,
    pub lambda: f64,
    pub beta: f64,
    pub chain: ChainSnapshot,
}

impl Checkpoint {
    pub fn new(config_hash: &str, params: &ModelParams, chain: ChainSnapshot) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            side_length: params.torus.side_length(),
            grid_points: params.torus.grid_points() as u64,
            components: params.components as u64,
            counterterm: params.scheme.kind,
            counterterm_ref: params.counterterm_ref,
            counterterm_mass: params.counterterm_mass,
            mass: params.mass,
            lambda: params.lambda,
            beta: params.beta,
            chain,
        }
    }

    /// True when the checkpoint was written for exactly these parameters.
    pub fn matches(&self, params: &ModelParams) -> bool {
        self.side_length.to_bits() == params.torus.side_length().to_bits()
            && self.grid_points == params.torus.grid_points() as u64
            && self.components == params.components as u64
            && self.counterterm == params.scheme.kind
            && self.counterterm_ref.to_bits() == params.counterterm_ref.to_bits()
            && self.counterterm_mass.to_bits() == params.counterterm_mass.to_bits()
            && self.mass.to_bits() == params.mass.to_bits()
            && self.lambda.to_bits() == params.lambda.to_bits()
    }

    pub fn encode(&self) -> Vec<u8> {
        let c = &self.chain;
        let mut b = Vec::with_capacity(256 + 8 * (c.values.len() + c.thermal_actions.len()));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        let hash = self.config_hash.as_bytes();
        b.extend_from_slice(&(hash.len() as u32).to_le_bytes());
        b.extend_from_slice(hash);
        b.extend_from_slice(&self.side_length.to_le_bytes());
        b.extend_from_slice(&self.grid_points.to_le_bytes());
        b.extend_from_slice(&self.components.to_le_bytes());
        b.push(match self.counterterm {
            CountertermKind::CutoffEta => 0,
            CountertermKind::LatticeTadpole => 1,
        });
        for x in [
            self.counterterm_ref,
            self.counterterm_mass,
            self.mass,
            self.lambda,
            self.beta,
        ] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b.extend_from_slice(&c.sweep.to_le_bytes());
        b.extend_from_slice(&c.step_size.to_le_bytes());
        b.extend_from_slice(&(c.trajectory_steps as u64).to_le_bytes());
        b.extend_from_slice(&c.jitter.to_le_bytes());
        let s = &c.stats;
        for x in [
            s.proposed,
            s.accepted,
            s.window_proposed,
            s.window_accepted,
            s.nonfinite,
        ] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b.extend_from_slice(&c.rng.seed);
        b.extend_from_slice(&c.rng.stream.to_le_bytes());
        b.extend_from_slice(&c.rng.word_pos.to_le_bytes());
        for v in [&c.thermal_actions, &c.values] {
            b.extend_from_slice(&(v.len() as u64).to_le_bytes());
            for x in v.iter() {
                b.extend_from_slice(&x.to_le_bytes());
            }
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hash_len = r.u32()? as usize;
        let config_hash = String::from_utf8(r.take(hash_len)?.to_vec())
            .map_err(|_| CheckpointError::Field("config hash is not UTF-8".into()))?;
        let side_length = r.f64()?;
        let grid_points = r.u64()?;
        let components = r.u64()?;
        let counterterm = match r.take(1)?[0] {
            0 => CountertermKind::CutoffEta,
            1 => CountertermKind::LatticeTadpole,
            k => return Err(CheckpointError::Field(format!("counterterm tag {k}"))),
        };
        let counterterm_ref = r.f64()?;
        let counterterm_mass = r.f64()?;
        let mass = r.f64()?;
        let lambda = r.f64()?;
        let beta = r.f64()?;
        let sweep = r.u64()?;
        let step_size = r.f64()?;
        let trajectory_steps = r.u64()? as usize;
        let jitter = r.f64()?;
        let stats = AcceptanceStats {
            proposed: r.u64()?,
            accepted: r.u64()?,
            window_proposed: r.u64()?,
            window_accepted: r.u64()?,
            nonfinite: r.u64()?,
        };
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let thermal_actions = r.f64s()?;
        let values = r.f64s()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        let expected = grid_points
            .checked_mul(grid_points)
            .and_then(|s| s.checked_mul(components));
        if expected != Some(values.len() as u64) {
            return Err(CheckpointError::Field(format!(
                "{} field values for a {grid_points}² grid with N = {components}",
                values.len()
            )));
        }
        Ok(Self {
            config_hash,
            side_length,
            grid_points,
            components,
            counterterm,
            counterterm_ref,
            counterterm_mass,
            mass,
            lambda,
            beta,
            chain: ChainSnapshot {
                values,
                step_size,
                trajectory_steps,
                jitter,
                stats,
                rng: RngState {
                    seed,
                    stream,
                    word_pos,
                },
                sweep,
                thermal_actions,
            },
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(CheckpointError::Truncated(self.pos));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigma_core::mcmc::ChainState;
    use sigma_core::rng::StreamKey;
    use sigma_core::spectral::TorusSpec;

    fn sample() -> (ModelParams, Checkpoint) {
        let torus = TorusSpec::new(2.0, 4).unwrap();
        let params =
            ModelParams::new(1.0, 0.0, 2, &torus, CountertermKind::LatticeTadpole).unwrap();
        let mut state = ChainState::initial(&params, &StreamKey::new(1, 0, 0)).unwrap();
        state.thermal_actions = vec![1.5, -2.25];
        state.sweep = 7;
        (params, Checkpoint::new("abc", &params, state.snapshot()))
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (params, c) = sample();
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), bytes);
        assert!(back.matches(&params));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let (_, c) = sample();
        let bytes = c.encode();
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
        assert!(matches!(
            Checkpoint::decode(&bytes[..20]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(
            Checkpoint::decode(&extra),
            Err(CheckpointError::Trailing(1))
        );
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Checkpoint::decode(&bad), Err(CheckpointError::Magic));
        let mut v2 = bytes;
        v2[8] = 2;
        assert_eq!(Checkpoint::decode(&v2), Err(CheckpointError::Version(2)));
    }
}
