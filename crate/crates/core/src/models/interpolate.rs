use super::train::stack;
use super::{forward, ModelParams};
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::image::{Flow, Image};

/// Result of doubling the frame rate of an acquired sequence.
///
/// Frame indices are on the full-rate grid, where acquired frame `k` sits at
/// index `2k`. Prediction `j` fills index `2j + 3`, between acquired frames
/// `j + 1` and `j + 2`.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub frames: Vec<Image>,
    /// Full-rate index of each prediction.
    pub indices: Vec<usize>,
    /// Per prediction: F(t -> t-1), F(t -> t+1) and, for MFINc,
    /// F(t+1 -> t-1), tagged with full-rate indices. Empty for SCIN.
    pub flows: Vec<Vec<Flow>>,
}

impl Interpolation {
    /// The `t -> t+1` flow of every prediction.
    pub fn forward_flows(&self) -> Vec<&Flow> {
        self.flows.iter().filter_map(|f| f.get(1)).collect()
    }
}

/// Predict the frame between every pair of acquired frames that has one
/// more acquired frame on each side.
pub fn interpolate_sequence(params: &ModelParams, acquired: &[Image]) -> Result<Interpolation> {
    params.check()?;
    if acquired.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "need at least 4 acquired frames, got {}",
            acquired.len()
        )));
    }
    let n = acquired.len() - 3;
    let mut result = Interpolation {
        frames: Vec::with_capacity(n),
        indices: Vec::with_capacity(n),
        flows: Vec::with_capacity(n),
    };
    for j in 0..n {
        let inputs = [
            &acquired[j],
            &acquired[j + 1],
            &acquired[j + 2],
            &acquired[j + 3],
        ];
        let mut g = Graph::<f32>::new();
        let vars = params.bind(&mut g, false);
        let x = g.constant(stack(&inputs));
        let out = forward(&mut g, &params.arch, &vars, x)?;
        let pred = out.prediction().ok_or(Error::MissingOutput("prediction"))?;
        let t = 2 * j as i64 + 3;
        result.frames.push(Image::from_tensor(g.value(pred))?);
        result.indices.push(t as usize);
        result.flows.push(
            out.flows()
                .into_iter()
                .map(|f| Flow::from_tensor(g.value(f.var), t + f.from, t + f.to))
                .collect::<Result<_>>()?,
        );
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, ArchitectureSpec, Variant};

    fn acquired(k: usize) -> Vec<Image> {
        (0..k)
            .map(|t| Image::from_fn(16, 16, |r, c| ((r * 3 + c + t) % 7) as f32 / 6.0))
            .collect()
    }

    #[test]
    fn bookkeeping() {
        let p = init_params(&ArchitectureSpec::standard(Variant::Mfin), 0).unwrap();
        let out = interpolate_sequence(&p, &acquired(9)).unwrap();
        assert_eq!(out.frames.len(), 6);
        assert_eq!(out.indices, [3, 5, 7, 9, 11, 13]);
        assert!(out.flows.iter().all(|f| f.len() == 2));
        assert_eq!((out.flows[0][0].from, out.flows[0][0].to), (3, 2));
        assert_eq!((out.flows[0][1].from, out.flows[0][1].to), (3, 4));

        let p = init_params(&ArchitectureSpec::standard(Variant::Mfinc), 0).unwrap();
        let out = interpolate_sequence(&p, &acquired(5)).unwrap();
        assert_eq!(out.flows.iter().map(Vec::len).collect::<Vec<_>>(), [3, 3]);
        assert_eq!((out.flows[1][2].from, out.flows[1][2].to), (6, 4));

        let p = init_params(&ArchitectureSpec::standard(Variant::Scin), 0).unwrap();
        let out = interpolate_sequence(&p, &acquired(4)).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert!(out.flows[0].is_empty());
        assert!(interpolate_sequence(&p, &acquired(3)).is_err());
    }
}
