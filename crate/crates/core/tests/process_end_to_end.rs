//! One task through the real interpreter: the draft reads a column that
//! does not exist, the repair uses the right one, and the chart comes back as a PNG. Skipped quietly when
//! python3 with matplotlib is not installed.

mod common;

use std::process::{Command, Stdio};
use std::sync::Arc;

use chartforge::corpus::{CategoryLabel, DataFile};
use chartforge::gateway::{MockProvider, MockReply, ProviderHandle};
use chartforge::metrics::decode_png;
use chartforge::pipeline::{run_task, FinalStatus, PipelineConfig};
use chartforge::sandbox::{classify_error, ErrorKind, ProcessBackend};

fn matplotlib_available() -> bool {
    Command::new("python3")
        .args(["-c", "import matplotlib"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .is_ok_and(|s| s.success())
}

const DRAFT: &str = "```python\nimport matplotlib.pyplot as plt\nimport pandas as pd\ndf = pd.read_csv('sales.csv')\nx = np.arange(len(df))\nplt.bar(x, df['sold'])\nplt.savefig('chart.png')\n```";
const REPAIRED: &str = "```python\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\nimport numpy as np\nimport pandas as pd\ndf = pd.read_csv('sales.csv')\nx = np.arange(len(df))\nplt.bar(x, df['units'])\nplt.savefig('chart.png')\n```";

#[test]
fn wrong_column_is_repaired_with_a_real_interpreter() {
    if !matplotlib_available() {
        eprintln!("python3 with matplotlib not found; skipping");
        return;
    }
    let mut t = common::task("sales", CategoryLabel::Pairwise);
    t.data_files.push(DataFile {
        name: "sales.csv".into(),
        content: "month,units\njan,3\nfeb,5\nmar,4\n".into(),
    });
    let mock = MockProvider::sequential(vec![
        MockReply::text(DRAFT),
        MockReply::text("Use the 'units' column instead of 'sold'. Everything else stays."),
        MockReply::text(REPAIRED),
    ]);
    let r = run_task(
        &t,
        &PipelineConfig::default(),
        &ProviderHandle::new(Arc::new(mock)),
        &ProcessBackend::default(),
    );
    assert_eq!(r.final_status, FinalStatus::Success { iteration_fixed: 1 }, "{r:#?}");
    let tb = r.attempts[0].outcome.traceback.as_deref().unwrap();
    assert!(tb.contains("KeyError: 'sold'"), "{tb}");
    assert_eq!(classify_error(tb).unwrap().kind, ErrorKind::Other);
    let png = r.final_image().unwrap();
    let img = decode_png(png).unwrap();
    assert!(img.width() > 100 && img.height() > 100);
}
