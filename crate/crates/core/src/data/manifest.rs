use std::path::{Path, PathBuf};

use super::dataset::{check_patient_split, Split};
use crate::bytes::read_file;
use crate::error::{Error, Result};

/// One session of a labeled dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub patient_id: String,
    pub split: Split,
}

/// Sessions with labels, patients and split tags; CSV header
/// `path,label,patient_id,split`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

/// `normal` → 0, `abnormal` → 1, or a class index.
pub fn parse_label(s: &str) -> Result<usize> {
    match s.trim().to_ascii_lowercase().as_str() {
        "normal" => Ok(0),
        "abnormal" => Ok(1),
        other => other
            .parse()
            .map_err(|_| Error::data(format!("label `{s}` is neither normal/abnormal nor a class index"))),
    }
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rd
            .headers()
            .map_err(|e| Error::data(format!("manifest header: {e}")))?
            .clone();
        let expect = ["path", "label", "patient_id", "split"];
        if header.iter().collect::<Vec<_>>() != expect {
            return Err(Error::data(format!(
                "manifest header must be `{}`, got `{}`",
                expect.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::data(format!("manifest row {row}: {e}")))?;
            let at = |e: Error| Error::data(format!("manifest row {row}: {e}"));
            if rec[0].is_empty() || rec[2].is_empty() {
                return Err(Error::data(format!("manifest row {row}: empty path or patient id")));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                label: parse_label(&rec[1]).map_err(at)?,
                patient_id: rec[2].to_string(),
                split: rec[3].parse().map_err(at)?,
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::data(format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,label,patient_id,split\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.path.display(),
                e.label,
                e.patient_id,
                e.split
            ));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors if any patient appears under both split tags.
    pub fn check_patient_split(&self) -> Result<()> {
        check_patient_split(self.entries.iter().map(|e| (e.patient_id.as_str(), e.split)))
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let m = DatasetManifest::parse(
            "path,label,patient_id,split\na.edf,abnormal,p1,train\nb.edf,0,p2,test\n",
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].label, 1);
        assert_eq!(m.entries[1].split, Split::Test);
        assert_eq!(DatasetManifest::parse(&m.to_csv()).unwrap(), m);
    }

    #[test]
    fn leak_refused() {
        let m = DatasetManifest::parse(
            "path,label,patient_id,split\na.edf,normal,p1,train\nb.edf,normal,p1,test\n",
        )
        .unwrap();
        assert!(matches!(m.check_patient_split(), Err(Error::Data(msg)) if msg.contains("p1")));
    }

    #[test]
    fn bad_rows() {
        assert!(DatasetManifest::parse("file,label\n").is_err());
        assert!(DatasetManifest::parse("path,label,patient_id,split\na.edf,weird,p1,train\n").is_err());
        assert!(DatasetManifest::parse("path,label,patient_id,split\na.edf,1,p1,dev\n").is_err());
    }
}
