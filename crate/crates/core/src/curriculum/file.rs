//! Curriculum files: one `[[stage]]` table per stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_curriculum, CurriculumError, StageConfig};

#[derive(Serialize, Deserialize)]
struct CurriculumFile {
    stage: Vec<StageConfig>,
}

pub fn parse_curriculum(text: &str) -> Result<Vec<StageConfig>, CurriculumError> {
    let f: CurriculumFile = toml::from_str(text).map_err(|e| CurriculumError::Config(e.to_string()))?;
    validate_curriculum(&f.stage)?;
    Ok(f.stage)
}

pub fn to_toml(c: &[StageConfig]) -> Result<String, CurriculumError> {
    toml::to_string(&CurriculumFile { stage: c.to_vec() }).map_err(|e| CurriculumError::Config(e.to_string()))
}

pub fn load_curriculum(path: &Path) -> Result<Vec<StageConfig>, CurriculumError> {
    parse_curriculum(&std::fs::read_to_string(path)?)
}

pub fn save_curriculum(path: &Path, c: &[StageConfig]) -> Result<(), CurriculumError> {
    crate::forge::write_atomic(path, to_toml(c)?.as_bytes())?;
    Ok(())
}
