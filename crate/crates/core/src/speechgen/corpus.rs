use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::nnkit::Matrix;

/// Which label a classifier is trained to predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Keyword,
    Speaker,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Keyword, Task::Speaker];

    pub fn name(self) -> &'static str {
        match self {
            Task::Keyword => "keyword",
            Task::Speaker => "speaker",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyword" => Ok(Task::Keyword),
            "speaker" => Ok(Task::Speaker),
            other => Err(Error::invalid(
                "task",
                format!("`{other}` (expected keyword or speaker)"),
            )),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of the synthetic corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub num_keywords: usize,
    pub num_speakers: usize,
    pub frames: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub keyword_scale: f64,
    pub speaker_scale: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            num_keywords: 12,
            num_speakers: 20,
            frames: 10,
            feature_dim: 32,
            samples_per_class: 50,
            noise_sigma: 0.75,
            keyword_scale: 1.0,
            speaker_scale: 0.35,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_keywords", self.num_keywords),
            ("num_speakers", self.num_speakers),
            ("frames", self.frames),
            ("feature_dim", self.feature_dim),
            ("samples_per_class", self.samples_per_class),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma", "must be finite and non-negative"));
        }
        for (name, v) in [
            ("keyword_scale", self.keyword_scale),
            ("speaker_scale", self.speaker_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: usize,
    pub keyword: usize,
    pub speaker: usize,
    /// `frames × feature_dim`.
    pub frames: Matrix,
}

impl Utterance {
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Keyword => self.keyword,
            Task::Speaker => self.speaker,
        }
    }
}

/// Labelled utterance analogs. Ids are `0..len()` and equal to the index.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub num_keywords: usize,
    pub num_speakers: usize,
    pub frames: usize,
    pub feature_dim: usize,
}

/// Generates a corpus where frame `t` of an utterance with keyword `k` and
/// speaker `j` is
///
/// `template[k][t] · keyword_scale + offset[j] · speaker_scale + ε`,
///
/// with templates (`frames × feature_dim`) and speaker offsets
/// (`feature_dim`) drawn once from standard normals and `ε ~ N(0, σ²I)`.
/// Each keyword gets `samples_per_class` utterances; speakers are assigned
/// round-robin over the whole corpus so both label sets stay balanced.
pub fn generate(spec: &GenSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t, d) = (spec.frames, spec.feature_dim);
    let mut standard = |n: usize| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    };
    let templates: Vec<Vec<f64>> = (0..spec.num_keywords).map(|_| standard(t * d)).collect();
    let offsets: Vec<Vec<f64>> = (0..spec.num_speakers).map(|_| standard(d)).collect();

    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let total = spec.num_keywords * spec.samples_per_class;
    let mut utterances = Vec::with_capacity(total);
    for keyword in 0..spec.num_keywords {
        for _ in 0..spec.samples_per_class {
            let id = utterances.len();
            let speaker = id % spec.num_speakers;
            let template = &templates[keyword];
            let offset = &offsets[speaker];
            let mut data = Vec::with_capacity(t * d);
            for frame in 0..t {
                for k in 0..d {
                    let eps = if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    data.push(
                        template[frame * d + k] * spec.keyword_scale
                            + offset[k] * spec.speaker_scale
                            + eps,
                    );
                }
            }
            utterances.push(Utterance {
                id,
                keyword,
                speaker,
                frames: Matrix::from_vec(t, d, data).expect("sized above"),
            });
        }
    }
    Ok(Corpus {
        utterances,
        num_keywords: spec.num_keywords,
        num_speakers: spec.num_speakers,
        frames: t,
        feature_dim: d,
    })
}

/// Mean-pools frames into a single feature vector.
pub fn featurize(frames: &Matrix) -> Result<Vec<f64>> {
    if frames.rows() == 0 {
        return Err(Error::EmptySet("frame sequence"));
    }
    let n = frames.rows() as f64;
    Ok(frames.column_sums().into_iter().map(|s| s / n).collect())
}

/// Pooled features and labels for one task, indexed by utterance id.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub task: Task,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Features and labels of the given ids, in the given order.
    pub fn batch(&self, ids: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.gather_rows(ids),
            ids.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn num_classes(&self, task: Task) -> usize {
        match task {
            Task::Keyword => self.num_keywords,
            Task::Speaker => self.num_speakers,
        }
    }

    pub fn labels(&self, task: Task) -> Vec<usize> {
        self.utterances.iter().map(|u| u.label(task)).collect()
    }

    pub fn task_data(&self, task: Task) -> Result<TaskData> {
        let mut data = Vec::with_capacity(self.len() * self.feature_dim);
        for u in &self.utterances {
            data.extend(featurize(&u.frames)?);
        }
        Ok(TaskData {
            task,
            features: Matrix::from_vec(self.len(), self.feature_dim, data)?,
            labels: self.labels(task),
            num_classes: self.num_classes(task),
        })
    }

    /// Delimited-text export: a `#` metadata line, a column header, then one
    /// row per utterance (`id,keyword,speaker` followed by the frames
    /// row-major). Values use the shortest round-tripping decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "# num_keywords={} num_speakers={} frames={} feature_dim={}",
            self.num_keywords, self.num_speakers, self.frames, self.feature_dim
        )
        .unwrap();
        out.push_str("id,keyword,speaker");
        for t in 0..self.frames {
            for k in 0..self.feature_dim {
                write!(out, ",x{t}_{k}").unwrap();
            }
        }
        out.push('\n');
        for u in &self.utterances {
            write!(out, "{},{},{}", u.id, u.keyword, u.speaker).unwrap();
            for v in u.frames.as_slice() {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Corpus> {
        let bad = |reason: String| Error::Format {
            what: "corpus csv",
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let meta = meta
            .strip_prefix('#')
            .ok_or_else(|| bad("missing `#` metadata line".into()))?;
        let mut dims = [None; 4];
        for field in meta.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("metadata field `{field}`")))?;
            let slot = match k {
                "num_keywords" => 0,
                "num_speakers" => 1,
                "frames" => 2,
                "feature_dim" => 3,
                _ => return Err(bad(format!("unknown metadata key `{k}`"))),
            };
            dims[slot] = Some(
                v.parse::<usize>()
                    .map_err(|e| bad(format!("metadata `{k}`: {e}")))?,
            );
        }
        let [Some(num_keywords), Some(num_speakers), Some(frames), Some(feature_dim)] = dims else {
            return Err(bad("metadata line must set num_keywords, num_speakers, frames, feature_dim".into()));
        };
        if frames == 0 || feature_dim == 0 {
            return Err(bad("frames and feature_dim must be positive".into()));
        }
        lines.next().ok_or_else(|| bad("missing column header".into()))?;
        let width = 3 + frames * feature_dim;
        let mut utterances = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(bad(format!(
                    "line {}: expected {width} fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let int = |i: usize| -> Result<usize> {
                fields[i]
                    .trim()
                    .parse()
                    .map_err(|e| bad(format!("line {}: field {}: {e}", lineno + 1, i + 1)))
            };
            let (id, keyword, speaker) = (int(0)?, int(1)?, int(2)?);
            if id != utterances.len() {
                return Err(bad(format!(
                    "line {}: ids must be contiguous from 0, found {id}",
                    lineno + 1
                )));
            }
            if keyword >= num_keywords || speaker >= num_speakers {
                return Err(bad(format!("line {}: label out of range", lineno + 1)));
            }
            let values = fields[3..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            utterances.push(Utterance {
                id,
                keyword,
                speaker,
                frames: Matrix::from_vec(frames, feature_dim, values)?,
            });
        }
        Ok(Corpus {
            utterances,
            num_keywords,
            num_speakers,
            frames,
            feature_dim,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Corpus> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: f64) -> GenSpec {
        GenSpec {
            num_keywords: 3,
            num_speakers: 2,
            frames: 4,
            feature_dim: 5,
            samples_per_class: 6,
            noise_sigma: noise,
            keyword_scale: 1.0,
            speaker_scale: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn generation_is_deterministic_and_well_formed() {
        let a = generate(&small(0.3)).unwrap();
        assert_eq!(a, generate(&small(0.3)).unwrap());
        assert_eq!(a.to_csv(), generate(&small(0.3)).unwrap().to_csv());
        assert_eq!(a.len(), 18);
        for (i, u) in a.utterances.iter().enumerate() {
            assert_eq!(u.id, i);
            assert!(u.keyword < 3 && u.speaker < 2);
            assert_eq!(u.frames.shape(), (4, 5));
        }
        let per_speaker = |s| a.utterances.iter().filter(|u| u.speaker == s).count();
        assert_eq!(per_speaker(0), 9);
        assert_eq!(per_speaker(1), 9);
    }

    #[test]
    fn zero_noise_makes_label_pairs_identical() {
        let c = generate(&small(0.0)).unwrap();
        for a in &c.utterances {
            for b in &c.utterances {
                if a.keyword == b.keyword && a.speaker == b.speaker {
                    assert_eq!(a.frames, b.frames);
                }
            }
        }
    }

    #[test]
    fn validation() {
        let mut s = small(0.1);
        s.frames = 0;
        assert!(generate(&s).is_err());
        let mut s = small(0.1);
        s.noise_sigma = -1.0;
        assert!(generate(&s).is_err());
        let mut s = small(0.1);
        s.speaker_scale = 0.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn featurize_mean_pools() {
        let single = Matrix::from_rows(&[vec![1.5, -2.0]]).unwrap();
        assert_eq!(featurize(&single).unwrap(), vec![1.5, -2.0]);
        let two = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(featurize(&two).unwrap(), vec![1.0, 2.0]);
        let constant = Matrix::from_rows(&vec![vec![0.7, 3.0]; 5]).unwrap();
        assert_eq!(featurize(&constant).unwrap(), vec![0.7, 3.0]);
        assert!(featurize(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = generate(&small(0.7)).unwrap();
        let back = Corpus::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let c = generate(&small(0.7)).unwrap();
        let text = c.to_csv();
        let mut lines: Vec<&str> = text.lines().collect();
        let short = "0,0,0,1.0";
        lines[2] = short;
        assert!(Corpus::from_csv(&lines.join("\n")).is_err());
        assert!(Corpus::from_csv("id,keyword\n").is_err());
    }

    #[test]
    fn task_data_pools_each_utterance() {
        let c = generate(&small(0.2)).unwrap();
        let data = c.task_data(Task::Speaker).unwrap();
        assert_eq!(data.features.shape(), (18, 5));
        assert_eq!(data.num_classes, 2);
        assert_eq!(data.features.row(7), featurize(&c.utterances[7].frames).unwrap().as_slice());
        assert_eq!(data.labels[7], c.utterances[7].speaker);
    }
}
