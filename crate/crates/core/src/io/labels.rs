use std::path::Path;

use crate::error::{Error, Result};
use crate::logme::{TaskKind, TaskLabels};

use super::ptmf;

/// Parses class indices separated by commas and/or newlines.
///
/// Blank lines are allowed; an empty field between two commas is not.
/// Without `num_classes` the class count is `max index + 1`.
pub fn parse_class_indices(text: &str, num_classes: Option<usize>) -> Result<TaskLabels> {
    let mut indices = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let mut field_offset = offset;
            for field in body.split(',') {
                let token = field.trim();
                let value = token.parse::<usize>().map_err(|_| {
                    Error::format(
                        field_offset,
                        format!("expected a class index, found {token:?}"),
                    )
                })?;
                indices.push(value);
                field_offset += field.len() as u64 + 1;
            }
        }
        offset += line.len() as u64;
    }
    if indices.is_empty() {
        return Err(Error::invalid("label file holds no class indices"));
    }
    let c = match num_classes {
        Some(c) => c,
        None => indices.iter().max().map_or(0, |m| m + 1),
    };
    TaskLabels::classification(indices, c)
}

/// Renders class indices one per line.
pub fn format_class_indices(indices: &[usize]) -> String {
    let mut s = String::with_capacity(indices.len() * 3);
    for i in indices {
        s.push_str(&i.to_string());
        s.push('\n');
    }
    s
}

/// Reads classification labels from CSV or regression targets from a PTMF matrix.
pub fn read_labels(
    path: impl AsRef<Path>,
    kind: TaskKind,
    num_classes: Option<usize>,
) -> Result<TaskLabels> {
    let path = path.as_ref();
    match kind {
        TaskKind::Classification => {
            let bytes = ptmf::read_bytes(path)?;
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::format(e.valid_up_to() as u64, "label file is not UTF-8"))?;
            parse_class_indices(text, num_classes)
        }
        TaskKind::Regression => TaskLabels::regression(ptmf::read_matrix_file(path)?),
    }
}

pub fn write_labels(path: impl AsRef<Path>, labels: &TaskLabels) -> Result<()> {
    match labels {
        TaskLabels::Classification { indices, .. } => {
            ptmf::write_bytes(path.as_ref(), format_class_indices(indices).as_bytes())
        }
        TaskLabels::Regression { targets } => ptmf::write_matrix_file(path, targets.as_ref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comma_list() {
        let labels = parse_class_indices("0,2,1,0", Some(3)).unwrap();
        assert_eq!(
            labels,
            TaskLabels::Classification {
                indices: vec![0, 2, 1, 0],
                num_classes: 3
            }
        );
    }

    #[test]
    fn parses_lines_and_infers_class_count() {
        let labels = parse_class_indices("1\n0\r\n\n4\n", None).unwrap();
        assert_eq!(labels.dims(), 5);
        assert_eq!(labels.n(), 3);
    }

    #[test]
    fn rejects_garbage_with_offset() {
        match parse_class_indices("0,1\n2,x\n", None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        assert!(parse_class_indices("0,,1", None).is_err());
        assert!(parse_class_indices("0,1 trailing", None).is_err());
        assert!(parse_class_indices("-1,0", None).is_err());
        assert!(parse_class_indices("", None).is_err());
        assert!(parse_class_indices("0,5", Some(3)).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        let labels = TaskLabels::classification(vec![2, 0, 1, 1], 3).unwrap();
        write_labels(&p, &labels).unwrap();
        assert_eq!(
            read_labels(&p, TaskKind::Classification, Some(3)).unwrap(),
            labels
        );

        let q = dir.path().join("y.ptmf");
        let reg =
            TaskLabels::regression(faer::Mat::from_fn(4, 2, |i, j| (i + 10 * j) as f64)).unwrap();
        write_labels(&q, &reg).unwrap();
        assert_eq!(read_labels(&q, TaskKind::Regression, None).unwrap(), reg);
    }
}
