use llfl::io::{write_embeddings, write_examples, write_facts, write_json};
use llfl::synth::PlantedConfig;

use super::out_dir;
use crate::args::SynthArgs;
use crate::error::CliResult;
use crate::manifest::RunManifest;
use crate::settings::Settings;

pub const FACTS_FILE: &str = "facts.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const EXAMPLES_FILE: &str = "examples.csv";

pub fn synth(s: &mut Settings, a: SynthArgs) -> CliResult<()> {
    let d = PlantedConfig::default();
    let cfg = PlantedConfig {
        clusters: s.or("clusters", a.clusters, d.clusters)?,
        facts_per_cluster: s.or("facts_per_cluster", a.facts_per_cluster, d.facts_per_cluster)?,
        feature_dim: s.or("feature_dim", a.feature_dim, d.feature_dim)?,
        embed_dim: s.or("embed_dim", a.embed_dim, d.embed_dim)?,
        train_per_fact: s.or("train_per_fact", a.train_per_fact, d.train_per_fact)?,
        test_per_fact: s.or("test_per_fact", a.test_per_fact, d.test_per_fact)?,
        cluster_signal: s.or("cluster_signal", a.cluster_signal, d.cluster_signal)?,
        long_tail: s.flag("long_tail", a.long_tail)?,
        seed: s.or("seed", a.seed, d.seed)?,
        ..d
    };
    let out = out_dir(s, a.out)?;
    let planted = cfg.generate()?;
    planted.dataset()?;
    write_facts(&out.join(FACTS_FILE), &planted.facts)?;
    write_embeddings(&out.join(EMBEDDINGS_FILE), &planted.table)?;
    write_examples(&out.join(EXAMPLES_FILE), &planted.examples)?;
    write_json(&out.join("clusters.json"), &planted.cluster_of)?;
    let mut m = RunManifest::new("synth", Some(cfg.seed), s.snapshot());
    for f in [FACTS_FILE, EMBEDDINGS_FILE, EXAMPLES_FILE, "clusters.json"] {
        m.artifact(f);
    }
    m.write(&out)
}
