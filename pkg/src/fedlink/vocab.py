"""Reference vocabularies: areas, names, conditions, risk factors, medications, diagnoses.

These are the closed value sets the generator draws from and the query
functions validate parameters against.
"""

from __future__ import annotations

from typing import Callable, Mapping

# Eircode routing key -> area name.
AREAS: dict[str, str] = {
    "A91": "Dundalk", "A92": "Drogheda", "A63": "Greystones", "A98": "Bray",
    "C15": "Navan", "D01": "Dublin 1", "D02": "Dublin 2", "D04": "Dublin 4",
    "D06": "Dublin 6", "D6W": "Dublin 6W", "D08": "Dublin 8", "D12": "Dublin 12",
    "D15": "Dublin 15", "D24": "Dublin 24", "E41": "Thurles", "E91": "Clonmel",
    "F23": "Castlebar", "F26": "Ballina", "F28": "Westport", "F42": "Roscommon",
    "F52": "Boyle", "F91": "Sligo", "F92": "Letterkenny", "F93": "Lifford",
    "F94": "Donegal", "H12": "Cavan", "H18": "Monaghan", "H53": "Ballinasloe",
    "H62": "Loughrea", "H65": "Athenry", "H91": "Galway", "K32": "Balbriggan",
    "K36": "Malahide", "K45": "Naul", "K67": "Swords", "N39": "Longford",
    "N41": "Carrick-on-Shannon", "N91": "Mullingar", "P31": "Ballincollig",
    "P85": "Clonakilty", "R32": "Portlaoise", "R35": "Tullamore", "R93": "Carlow",
    "R95": "Kilkenny", "T12": "Cork Southside", "T23": "Cork Northside",
    "V15": "Kilrush", "V92": "Tralee", "V93": "Killarney", "V94": "Limerick",
    "W91": "Naas", "X91": "Waterford", "Y35": "Wexford",
}
AREA_BY_NAME: dict[str, str] = {name.lower(): key for key, name in AREAS.items()}

MALE_NAMES = (
    "Aidan Brendan Cathal Cian Colm Conor Darragh Declan Donal Eamon Eoin Fergal "
    "Fionn Gearoid Killian Liam Lorcan Niall Oisin Padraig Ronan Ruairi Seamus Sean "
    "Shane Tadhg Tomas Michael John Patrick James Thomas Kevin Brian Gerard Martin "
    "David Paul Mark Daniel Enda Ciaran Cormac Dermot Fintan"
).split()
FEMALE_NAMES = (
    "Aine Aisling Aoife Bridget Caoimhe Ciara Clodagh Deirdre Eimear Eithne Fiona "
    "Grainne Niamh Nuala Orla Roisin Saoirse Sinead Siobhan Sorcha Una Mary Margaret "
    "Catherine Anne Helen Patricia Sarah Emma Laura Claire Julie Louise Maeve Muireann "
    "Nora Sheila Teresa Yvonne Brid Mairead Orlaith Emer Ailbhe Cliona"
).split()
SURNAMES = (
    "Murphy Kelly Byrne Ryan OBrien Walsh OSullivan OConnor McCarthy Doyle Gallagher "
    "Doherty Kennedy Lynch Murray Quinn Moore McLoughlin Carroll Connolly Daly Connell "
    "Wilson Dunne Brennan Burke Collins Campbell Clarke Johnston Hughes Farrell Fitzgerald "
    "Brown Martin Maguire Nolan Flynn Thompson Callaghan ONeill Duffy Mahony Boyle "
    "Healy Shea White Sweeney Hayes Kavanagh Power McGrath Moran Brady Stewart Casey "
    "Foley Fitzpatrick Leary McDonnell MacMahon Donnelly Regan Donovan Burns Flanagan "
    "Mullan Barry Kane Robinson Cunningham Griffin Kenny Sheehan Ward Whelan Lyons "
    "Reid Graham Higgins Cullen Keane King Maher McKenna Bell Scott Hogan Keeffe "
    "Magee McNamara McDonald Hurley Donoghue Egan Tierney Madden Mulcahy Geraghty"
).split()
STREETS = (
    "Main Street", "Church Road", "Bridge Street", "Chapel Lane", "Green Road",
    "Mill Road", "Castle Street", "Abbey Road", "Station Road", "Market Square",
    "Park Avenue", "Hill View", "River Walk", "Strand Road", "College Road",
)

HOSPITALS = (
    "Mater Misericordiae University Hospital", "St James's Hospital", "Beaumont Hospital",
    "Cork University Hospital", "University Hospital Galway", "University Hospital Limerick",
    "Sligo University Hospital", "Letterkenny University Hospital", "Mayo University Hospital",
    "Our Lady of Lourdes Hospital", "University Hospital Waterford", "Tallaght University Hospital",
)
CONSULTANT_SURNAMES = ("Agarwal", "Breslin", "Costello", "Dolan", "Egan", "Fahy",
                       "Gilligan", "Hennessy", "Joyce", "Keogh", "Lenihan", "Moynihan")

# HIPE principal diagnoses (ICD-10 code, description).
DIAGNOSES: dict[str, tuple[str, str]] = {
    "retinopathy": ("H36.0", "Diabetic retinopathy"),
    "type1": ("E10.9", "Type 1 diabetes mellitus without complications"),
    "type2": ("E11.9", "Type 2 diabetes mellitus without complications"),
    "hypertension": ("I10", "Essential hypertension"),
    "heart_failure": ("I50.0", "Congestive heart failure"),
    "ischaemic_heart_disease": ("I25.1", "Atherosclerotic heart disease"),
    "cerebrovascular_disease": ("I63.9", "Cerebral infarction"),
    "atrial_fibrillation": ("I48.9", "Atrial fibrillation"),
    "asthma": ("J45.9", "Asthma"),
    "copd": ("J44.9", "Chronic obstructive pulmonary disease"),
    "foot_ulcer": ("L97", "Ulcer of lower limb"),
}
ACUTE_DIAGNOSES: tuple[tuple[str, str], ...] = (
    ("J18.9", "Pneumonia"),
    ("K35.8", "Acute appendicitis"),
    ("S72.0", "Fracture of neck of femur"),
    ("N39.0", "Urinary tract infection"),
    ("K80.2", "Calculus of gallbladder"),
    ("R07.4", "Chest pain"),
)
RETINOPATHY_CODE = DIAGNOSES["retinopathy"][0]
AMPUTATION_PROCEDURE = "Lower limb amputation"

AMPUTATION_ANTECEDENTS = ("Foot Ulceration", "Neuropathy", "Peripheral Vascular Disease")

TRUE, FALSE = "true", "false"


def _flag(column: str) -> Callable[[Mapping], bool]:
    return lambda r: r.get(column) == TRUE


def is_diabetic(cdm: Mapping) -> bool:
    return cdm.get("diabetes_type") in ("1", "2")


# Chronic-disease condition strings understood by the CDM-backed queries.
CONDITIONS: dict[str, Callable[[Mapping], bool]] = {
    "Type 2 diabetes": lambda r: r.get("diabetes_type") == "2",
    "Type 1 diabetes": lambda r: r.get("diabetes_type") == "1",
    "Diabetes": is_diabetic,
    "Hypertension": _flag("hypertension"),
    "Asthma": _flag("asthma"),
    "COPD": _flag("copd"),
    "Stable Heart Failure": _flag("heart_failure"),
    "Ischaemic Heart Disease": _flag("ischaemic_heart_disease"),
    "Cerebrovascular Disease": _flag("cerebrovascular_disease"),
    "Atrial Fibrillation": _flag("atrial_fibrillation"),
}
_CONDITION_KEYS = {k.lower(): k for k in CONDITIONS}


def canonical_condition(text: str) -> str | None:
    return _CONDITION_KEYS.get(" ".join(text.split()).lower())


CVD: dict[str, str] = {
    "Stable Heart Failure": "heart_failure",
    "Ischaemic Heart Disease": "ischaemic_heart_disease",
    "Cerebrovascular Disease": "cerebrovascular_disease",
    "Atrial Fibrillation": "atrial_fibrillation",
}
_CVD_ALIASES = {
    **{k.lower(): k for k in CVD},
    "stroke": "Cerebrovascular Disease",
    "tia": "Cerebrovascular Disease",
    "stroke / tia": "Cerebrovascular Disease",
    "cerebrovascular disease (stroke / tia)": "Cerebrovascular Disease",
    "heart failure": "Stable Heart Failure",
}


def canonical_cvd(text: str) -> str | None:
    return _CVD_ALIASES.get(" ".join(text.split()).lower())


RISK_FACTORS: dict[str, Callable[[Mapping], bool]] = {
    "overweight or obesity": lambda r: r.get("bmi") is not None and r["bmi"] >= 25.0,
    "age 45 or older": lambda r: r.get("age") is not None and r["age"] >= 45,
    "parent with type 2 diabetes": lambda r: r.get("family_history") in ("parent", "both"),
    "sibling with type 2 diabetes": lambda r: r.get("family_history") in ("sibling", "both"),
    "physically active less than 3 times a week":
        lambda r: r.get("activity_per_week") is not None and r["activity_per_week"] < 3,
    "non-alcoholic fatty liver disease": _flag("nafld"),
    "ethnicity": _flag("ethnicity_risk"),
}
_FACTOR_ALIASES: dict[str, tuple[str, ...]] = {
    **{k: (k,) for k in RISK_FACTORS},
    "overweight": ("overweight or obesity",),
    "obesity": ("overweight or obesity",),
    "age 45 or over": ("age 45 or older",),
    "parent or sibling with type 2 diabetes":
        ("parent with type 2 diabetes", "sibling with type 2 diabetes"),
    "being physically active less than 3 times a week":
        ("physically active less than 3 times a week",),
    "physical inactivity": ("physically active less than 3 times a week",),
    "have non-alcoholic fatty liver disease": ("non-alcoholic fatty liver disease",),
    # common misspelling, accepted as given
    "non-alcholic fatty liver disease": ("non-alcoholic fatty liver disease",),
    "nafld": ("non-alcoholic fatty liver disease",),
}


def canonical_factors(text: str) -> tuple[str, ...] | None:
    return _FACTOR_ALIASES.get(" ".join(text.split()).lower())


MEDICATION_CLASS: dict[str, str] = {
    "Metformin": "antidiabetic", "Gliclazide": "antidiabetic", "Sitagliptin": "antidiabetic",
    "Empagliflozin": "antidiabetic", "Insulin glargine": "antidiabetic",
    "Ramipril": "antihypertensive", "Perindopril": "antihypertensive",
    "Amlodipine": "antihypertensive", "Losartan": "antihypertensive",
    "Bendroflumethiazide": "antihypertensive",
    "Atorvastatin": "other", "Apixaban": "other", "Bisoprolol": "other",
    "Salbutamol": "other", "Tiotropium": "other",
}
T2_DRUGS = ("Gliclazide", "Sitagliptin", "Empagliflozin")
BP_DRUGS = ("Ramipril", "Perindopril", "Amlodipine", "Losartan", "Bendroflumethiazide")
PCRS_SCHEMES = ("GMS", "GPVC", "DPS", "LTI")
MED_SEPARATOR = "; "

SBP_THRESHOLD = 140
DBP_THRESHOLD = 90


def hypertensive(cdm: Mapping) -> bool:
    """Flagged hypertension, or SBP >= 140 and/or DBP >= 90 (both bounds inclusive)."""
    if cdm.get("hypertension") == TRUE:
        return True
    sbp, dbp = cdm.get("sbp"), cdm.get("dbp")
    return (sbp is not None and sbp >= SBP_THRESHOLD) or (dbp is not None and dbp >= DBP_THRESHOLD)


def cdm_conditions(cdm: Mapping) -> str:
    """Human-readable condition list for a CDM record, in vocabulary order."""
    names = [c for c, pred in CONDITIONS.items() if c != "Diabetes" and pred(cdm)]
    return MED_SEPARATOR.join(names)


def retinopathy_risk(duration_years: float) -> float:
    """Monotone risk of retinopathy by diabetes duration (about 25% at 5y, 60% at 10y, 80% at 15y)."""
    knots = ((0.0, 0.0), (5.0, 0.25), (10.0, 0.60), (15.0, 0.80), (25.0, 0.90))
    if duration_years >= knots[-1][0]:
        return knots[-1][1]
    for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
        if x0 <= duration_years <= x1:
            return y0 + (y1 - y0) * (duration_years - x0) / (x1 - x0)
    return 0.0
