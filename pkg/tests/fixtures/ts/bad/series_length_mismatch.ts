@problemName SeriesLen
@dimensions 1
@equalLength true
@seriesLength 4
@classLabel true a b
@data
1,2,3:a
