//! Regenerates the bundled language profile TSVs from the committed seed
//! texts. Run after editing anything under src/langid/seeds/:
//!
//!     cargo run -p retrocorpus-core --example gen_profiles

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use retrocorpus_core::langid::{train_profile, BUILTIN_SEEDS};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("src/langid/profiles");
    for (lang, seed) in BUILTIN_SEEDS {
        let profile = train_profile(seed, lang).expect("seed long enough");
        let path = dir.join(format!("{lang}.tsv"));
        let mut out = BufWriter::new(File::create(&path).expect("profile dir exists"));
        profile.write_tsv(&mut out).expect("write profile");
        println!("wrote {} ({} grams)", path.display(), profile.len());
    }
}
