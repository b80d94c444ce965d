import pytest

from caplab.corpus import CaptionSample


@pytest.fixture
def make_samples():
    def _make(n, with_alt=True, source="fixture", language="EN"):
        return [
            CaptionSample(
                sample_id=f"s{i:05d}",
                image_ref=f"http://images.local/{i}.jpg",
                source_dataset=source,
                language=language,
                alt_text=f"alt text {i}" if with_alt else None,
            )
            for i in range(n)
        ]

    return _make
