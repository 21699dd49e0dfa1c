import numpy as np
import pytest

from glarisk.records import (
    ClinicalRecord,
    FundusFeatures,
    HumanJudgment,
    Label,
)

# The documented sample annotation, in the record text grammar.
SAMPLE_RECORD_TEXT = """\
record pub0001
optic_disc_size: large
cup_to_disc_ratio: 0.8
isnt_rule_followed: false
rim_pallor: true
rim_color: pale
bayoneting: true
sharp_edge: true
laminar_dot_sign: true
notching: true
rim_thinning: true
neuroretinal_rim: rim appears thin and pale superiorly
glaucoma_risk_assessment: high risk
confidence_level: 0.9
image_ref: img_pub0001
label: 1
end
"""

SAMPLE_OCT_TABLE = """\
biomarker\tod\tos\tie
@subject\tutsw0001\tlabel=0\timage_ref=oct_utsw0001
AR\t97\t91\t6
SR\t94\t92\t2
IR\t99\t89\t10
I-ER (S-I)\t-5\t3\tN/A
A-O\t0.28\t0.51\t-0.23
V-O\t0.46\t0.79\t-0.33
H-O\t0.62\t0.74\t-0.12
RA\t1.44\t1.23\t0.21
DA\t2.01\t2.52\t-0.51
CVO\t0.043\t0.299\t-0.256
A-G\t85\t83\t2
S-G\t81\t83\t-2
I-F\t88\t83\t5
I-EG (S-I)\t-7\t0\tN/A
FLV\t0.87\t0.47\t0.40
GLV\t10.76\t12.50\t-1.74
"""


def make_record(rid, *, size=None, cdr=None, pallor=None, thinning=None,
                color=None, risk=None, confidence=None, label=None,
                narrative=None, image_ref=None):
    judgment = None
    if risk is not None or confidence is not None:
        judgment = HumanJudgment(risk_assessment=risk, confidence_level=confidence)
    return ClinicalRecord(
        id=rid,
        fundus=FundusFeatures(optic_disc_size=size, cup_to_disc_ratio=cdr,
                              rim_pallor=pallor, rim_thinning=thinning,
                              rim_color=color, neuroretinal_rim=narrative),
        judgment=judgment,
        image_ref=image_ref,
        label=None if label is None else Label(class_index=label),
    )


@pytest.fixture
def tiny_records():
    """Six records spanning both classes with assorted missingness."""
    return [
        make_record("a", size="large", cdr=0.8, pallor=True, thinning=True,
                    color="pale", risk="high risk", confidence=0.9, label=1,
                    narrative="rim thin pale", image_ref="img_a"),
        make_record("b", size="small", cdr=0.4, pallor=False, thinning=False,
                    color="pink", risk="very healthy", confidence=0.8, label=0,
                    narrative="rim healthy pink", image_ref="img_b"),
        make_record("c", size="normal", cdr=0.7, pallor=True, thinning=None,
                    color="pale", risk="high risk", confidence=0.7, label=1,
                    narrative="thin rim notching", image_ref="img_c"),
        make_record("d", cdr=None, pallor=False, thinning=False, color=None,
                    risk="healthy", confidence=None, label=0,
                    narrative="unremarkable rim"),
        make_record("e", size="large", cdr=0.9, pallor=True, thinning=True,
                    color="white", risk="very high risk", confidence=0.95, label=1,
                    narrative="marked thinning pallor", image_ref="img_e"),
        make_record("f", size="small", cdr=0.3, pallor=False, thinning=False,
                    color="pink", label=0, narrative="rim intact", image_ref="img_f"),
    ]


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
