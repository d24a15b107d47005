use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::{agent_id, AgentProfile};
use super::ipf::JointDistribution;
use super::SynthError;
use crate::attribute::{is_adult_age, Attribute};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Sample = 1,
    Marital = 2,
    Education = 3,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Draws `n` agents from the joint distribution. Draws landing in an
/// under-18 age category are discarded and redrawn.
pub fn sample_agents(joint: &JointDistribution, n: usize, seed: u64) -> Result<Vec<AgentProfile>, SynthError> {
    if n == 0 {
        return Err(SynthError::Domain("agent count must be positive".into()));
    }
    let age_dim = joint.dimensions.iter().position(|d| *d == Attribute::AgeGroup);
    if let Some(d) = age_dim {
        let adult_mass: f64 = joint
            .marginal(d)
            .iter()
            .zip(&joint.categories[d])
            .filter(|(_, c)| is_adult_age(c))
            .map(|(m, _)| m)
            .sum();
        if adult_mass <= 0.0 {
            return Err(SynthError::Domain("joint distribution has no adult mass".into()));
        }
    }
    let sampler = joint.fit.array.sampler()?;
    let mut rng = stream_rng(seed, Stream::Sample);
    let mut agents = Vec::with_capacity(n);
    while agents.len() < n {
        let cell = sampler.draw(&mut rng);
        if let Some(d) = age_dim {
            if !is_adult_age(&joint.categories[d][cell[d]]) {
                continue;
            }
        }
        let mut agent = AgentProfile::new(agent_id(agents.len()));
        for (d, &i) in cell.iter().enumerate() {
            agent.set(joint.dimensions[d], joint.categories[d][i].clone());
        }
        agents.push(agent);
    }
    Ok(agents)
}
